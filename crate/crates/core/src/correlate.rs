//! Observer statistics.
//!
//! Each station reads its V-detector and records `Z = +1` for pointer 0 and
//! `Z = −1` for pointer 1. A third party multiplies the two readings. One
//! trial picks a single branch with probability given by the diagonal of the
//! reduced density matrix, and every recorded value comes from that branch.
//! That selection is the only non-unitary step in the crate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{build_branches, reduced_density_structured, BranchSet, PointerConfiguration};
use crate::detector::{DetectorArray, DetectorId, Station};
use crate::error::{Error, Result};
use crate::photon::canonical_angle;
use crate::rng::{derive_seed, stream_rng};

/// Significance multiple used by the statistical pass/fail checks.
pub const SIGMA_THRESHOLD: f64 = 4.0;

/// Eigenvalue of `Z` for a pointer reading.
pub fn z_of_bit(bit: u8) -> i8 {
    if bit == 0 {
        1
    } else {
        -1
    }
}

/// The `Z` observable attached to one detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ZObservable {
    pub detector: DetectorId,
}

impl ZObservable {
    pub fn eigenvalue(&self, config: PointerConfiguration) -> i8 {
        z_of_bit(config.bit(self.detector))
    }
}

fn v_detector(station: Station) -> DetectorId {
    match station {
        Station::L => DetectorId::LV,
        Station::R => DetectorId::RV,
    }
}

/// Reads the station's V-detector. Fails for configurations where the
/// station has not registered exactly one photon.
pub fn z_encode(config: PointerConfiguration, station: Station) -> Result<i8> {
    if config.fired(station).is_none() {
        return Err(Error::NoOutcome(config.to_string()));
    }
    Ok(ZObservable {
        detector: v_detector(station),
    }
    .eigenvalue(config))
}

/// True iff every branch is an eigenstate of `Z_LV Z_RV` with eigenvalue −1.
pub fn check_eigen_identity(branches: &BranchSet) -> bool {
    branches.branches().iter().all(|(c, _)| {
        matches!(
            (z_encode(*c, Station::L), z_encode(*c, Station::R)),
            (Ok(l), Ok(r)) if l * r == -1
        )
    })
}

/// One sampled measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub branch: PointerConfiguration,
    /// Internal state drawn for each detector, in array order.
    pub internal: [usize; 4],
    pub z_left: i8,
    pub z_right: i8,
    pub clara_product: i8,
}

impl TrialRecord {
    /// Recomputes every derived field from the branch alone.
    pub fn is_consistent(&self) -> bool {
        let b = self.branch;
        b.is_post_absorption()
            && z_encode(b, Station::L) == Ok(self.z_left)
            && z_encode(b, Station::R) == Ok(self.z_right)
            && self.clara_product == self.z_left * self.z_right
    }
}

/// Samples trials for one pair of analyzer settings.
///
/// Branch weights come from the diagonal of the reduced density matrix,
/// computed once per sampler.
#[derive(Debug, Clone)]
pub struct TrialSampler<'a> {
    theta_a: f64,
    theta_b: f64,
    detectors: &'a DetectorArray,
    configs: Vec<PointerConfiguration>,
    readings: Vec<(i8, i8)>,
    picker: WeightedIndex<f64>,
}

impl<'a> TrialSampler<'a> {
    pub fn new(theta_a: f64, theta_b: f64, detectors: &'a DetectorArray) -> Result<Self> {
        if !theta_a.is_finite() || !theta_b.is_finite() {
            return Err(Error::Config("analyzer angles must be finite".into()));
        }
        let (theta_a, theta_b) = (canonical_angle(theta_a), canonical_angle(theta_b));
        let branches = build_branches(theta_b - theta_a);
        let rho = reduced_density_structured(&branches, detectors);
        let weights: Vec<f64> = rho.diagonal().into_iter().map(|w| w.max(0.0)).collect();
        let picker =
            WeightedIndex::new(&weights).map_err(|e| Error::InvalidBranchSet(e.to_string()))?;
        let configs = rho.configs().to_vec();
        let readings = configs
            .iter()
            .map(|&c| Ok((z_encode(c, Station::L)?, z_encode(c, Station::R)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            theta_a,
            theta_b,
            detectors,
            configs,
            readings,
            picker,
        })
    }

    pub fn theta_a(&self) -> f64 {
        self.theta_a
    }

    pub fn theta_b(&self) -> f64 {
        self.theta_b
    }

    pub fn sample<R: Rng + ?Sized>(&self, trial_index: u64, rng: &mut R) -> TrialRecord {
        let k = self.picker.sample(rng);
        let internal =
            std::array::from_fn(|d| self.detectors.get(DetectorId::ALL[d]).sample_internal(rng));
        let (z_left, z_right) = self.readings[k];
        TrialRecord {
            trial_index,
            theta_a: self.theta_a,
            theta_b: self.theta_b,
            branch: self.configs[k],
            internal,
            z_left,
            z_right,
            clara_product: z_left * z_right,
        }
    }

    /// `n` trials, trial `i` drawn from its own stream under `seed`. The
    /// result does not depend on how the work is spread over threads.
    pub fn run(&self, n: usize, seed: u64) -> Vec<TrialRecord> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.sample(i, &mut stream_rng(seed, i)))
            .collect()
    }
}

/// Draws one trial for the given settings.
pub fn sample_trial<R: Rng + ?Sized>(
    theta_a: f64,
    theta_b: f64,
    detectors: &DetectorArray,
    trial_index: u64,
    rng: &mut R,
) -> Result<TrialRecord> {
    Ok(TrialSampler::new(theta_a, theta_b, detectors)?.sample(trial_index, rng))
}

/// `−cos 2θ`.
pub fn correlation_theory(theta_rel: f64) -> f64 {
    -(2.0 * theta_rel).cos()
}

/// Sample mean of the product with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_rel: f64,
    pub n_trials: usize,
    pub mean_product: f64,
    pub std_error: f64,
    pub theory: f64,
}

impl CorrelationEstimate {
    /// Deviation from theory in units of the standard error. A zero-variance
    /// estimate must match theory to 1e-12.
    pub fn within(&self, sigmas: f64) -> bool {
        let dev = (self.mean_product - self.theory).abs();
        if self.std_error == 0.0 {
            dev <= 1e-12
        } else {
            dev < sigmas * self.std_error
        }
    }
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (usize, f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (n, mean, 0.0);
    }
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (n, mean, (var / n as f64).sqrt())
}

pub fn correlation(trials: &[TrialRecord]) -> Result<CorrelationEstimate> {
    let first = trials.first().ok_or(Error::EmptyTrials)?;
    if trials
        .iter()
        .any(|t| t.theta_a != first.theta_a || t.theta_b != first.theta_b)
    {
        return Err(Error::MixedSettings);
    }
    let (n, mean, se) = mean_and_stderr(trials.iter().map(|t| f64::from(t.clara_product)));
    let theta_rel = first.theta_b - first.theta_a;
    Ok(CorrelationEstimate {
        theta_a: first.theta_a,
        theta_b: first.theta_b,
        theta_rel,
        n_trials: n,
        mean_product: mean,
        std_error: se,
        theory: correlation_theory(theta_rel),
    })
}

/// Analyzer angles for a CHSH run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// Angles giving the maximal quantum value `|S| = 2√2`.
    pub fn canonical() -> Self {
        Self {
            a: 0.0,
            a_prime: PI / 4.0,
            b: PI / 8.0,
            b_prime: 3.0 * PI / 8.0,
        }
    }

    /// Setting pairs in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    /// `S` predicted by `C = −cos 2Δ`.
    pub fn theory(&self) -> f64 {
        let c = self.pairs().map(|(x, y)| correlation_theory(y - x));
        chsh_combination(c)
    }
}

fn chsh_combination(c: [f64; 4]) -> f64 {
    c[0] - c[1] + c[2] + c[3]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshEstimate {
    pub settings: ChshSettings,
    pub correlations: [CorrelationEstimate; 4],
    pub s: f64,
    pub std_error: f64,
    pub theory: f64,
    /// `|S| > 2`.
    pub exceeds_classical_bound: bool,
}

pub const MIN_CHSH_TRIALS: usize = 100;

/// Estimates `S = C(a,b) − C(a,b') + C(a',b) + C(a',b')` from `n_each`
/// trials per setting pair.
pub fn chsh(
    settings: ChshSettings,
    n_each: usize,
    detectors: &DetectorArray,
    seed: u64,
) -> Result<ChshEstimate> {
    if n_each < MIN_CHSH_TRIALS {
        return Err(Error::InsufficientTrials {
            min: MIN_CHSH_TRIALS,
            got: n_each,
        });
    }
    let mut correlations = Vec::with_capacity(4);
    for (k, (x, y)) in settings.pairs().into_iter().enumerate() {
        let sampler = TrialSampler::new(x, y, detectors)?;
        correlations.push(correlation(
            &sampler.run(n_each, derive_seed(seed, k as u64)),
        )?);
    }
    let correlations: [CorrelationEstimate; 4] = correlations.try_into().expect("four pairs");
    let s = chsh_combination(correlations.map(|c| c.mean_product));
    let std_error = correlations
        .iter()
        .map(|c| c.std_error.powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ChshEstimate {
        settings,
        correlations,
        s,
        std_error,
        theory: settings.theory(),
        exceeds_classical_bound: s.abs() > 2.0,
    })
}

/// One station's outcome frequency for one remote setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalGroup {
    pub remote_theta: f64,
    pub n: usize,
    /// Frequency of `Z = +1` at the audited station.
    pub plus_frequency: f64,
    /// Binomial standard error at the theoretical marginal of 1/2.
    pub std_error: f64,
    /// `(plus_frequency − 1/2) / std_error`.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoSignalReport {
    pub station: Station,
    pub local_theta: f64,
    pub groups: Vec<MarginalGroup>,
    /// Largest pairwise difference between groups, in standard errors.
    pub max_pairwise_z: f64,
    /// Largest single-group deviation from 1/2, in standard errors.
    pub max_group_z: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks that `station`'s outcome frequencies do not depend on the remote
/// analyzer setting. Trials must share the local setting and cover at least
/// two remote settings.
pub fn nosignal_audit(trials: &[TrialRecord], station: Station) -> Result<NoSignalReport> {
    let first = trials.first().ok_or(Error::EmptyTrials)?;
    let split = |t: &TrialRecord| match station {
        Station::L => (t.theta_a, t.theta_b, t.z_left),
        Station::R => (t.theta_b, t.theta_a, t.z_right),
    };
    let local_theta = split(first).0;

    // keyed by bit pattern so grouping is exact and ordered
    let mut groups: BTreeMap<u64, (f64, usize, usize)> = BTreeMap::new();
    for t in trials {
        let (local, remote, z) = split(t);
        if local != local_theta {
            return Err(Error::MixedSettings);
        }
        let g = groups.entry(remote.to_bits()).or_insert((remote, 0, 0));
        g.1 += 1;
        if z == 1 {
            g.2 += 1;
        }
    }
    if groups.len() < 2 {
        return Err(Error::SingleGroup(groups.len()));
    }

    let mut out: Vec<MarginalGroup> = groups
        .into_values()
        .map(|(remote_theta, n, plus)| {
            let freq = plus as f64 / n as f64;
            let se = (0.25 / n as f64).sqrt();
            MarginalGroup {
                remote_theta,
                n,
                plus_frequency: freq,
                std_error: se,
                z_score: (freq - 0.5) / se,
            }
        })
        .collect();
    out.sort_by(|a, b| a.remote_theta.total_cmp(&b.remote_theta));

    let mut max_pairwise_z = 0.0f64;
    for (i, gi) in out.iter().enumerate() {
        for gj in &out[i + 1..] {
            let se = (gi.std_error.powi(2) + gj.std_error.powi(2)).sqrt();
            max_pairwise_z = max_pairwise_z.max((gi.plus_frequency - gj.plus_frequency).abs() / se);
        }
    }
    let max_group_z = out.iter().map(|g| g.z_score.abs()).fold(0.0, f64::max);
    Ok(NoSignalReport {
        station,
        local_theta,
        groups: out,
        max_pairwise_z,
        max_group_z,
        threshold: SIGMA_THRESHOLD,
        pass: max_pairwise_z < SIGMA_THRESHOLD && max_group_z < SIGMA_THRESHOLD,
    })
}

/// Trials with `station`'s analyzer fixed at `local_theta` and the other
/// station stepping through `remote_grid`, `n` trials per remote setting.
pub fn nosignal_trials(
    station: Station,
    local_theta: f64,
    remote_grid: &[f64],
    n: usize,
    detectors: &DetectorArray,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let mut all = Vec::with_capacity(n * remote_grid.len());
    for (k, &remote) in remote_grid.iter().enumerate() {
        let (ta, tb) = match station {
            Station::L => (local_theta, remote),
            Station::R => (remote, local_theta),
        };
        let sampler = TrialSampler::new(ta, tb, detectors)?;
        all.extend(sampler.run(n, derive_seed(seed, k as u64)));
    }
    Ok(all)
}
