//! The measurement chain: photon branches mapped onto the four-detector
//! array, and the reduced density matrix over pointer configurations.
//!
//! Two routes compute the reduced matrix:
//!
//! * [`reduced_density_structured`] uses the fact that tracing out the
//!   internal states of independent detectors factorizes every entry into a
//!   product of one local factor per detector. Cost is independent of `M`
//!   once the four decoherence factors are known.
//! * [`reduced_density_dense_oracle`] builds every ensemble element
//!   `|Ψ_{μνστ}⟩` explicitly in the full pointer⊗internal Hilbert space,
//!   mixes them with the product weights and partial-traces the internal
//!   factors. It is exponential in the detector sizes and exists to check
//!   the structured route.
//!
//! Entry `(i, j)` of the reduced matrix is `⟨c_i| ρ |c_j⟩` for the pointer
//! configurations `c_i`, `c_j`. A detector whose pointer reads 1 on the row
//! side and 0 on the column side contributes `f = Σ p(μ)⟨μ|μ'⟩`; the reverse
//! orientation contributes `f*`; agreeing pointers contribute 1.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::detector::{DetectorArray, DetectorId, DistKind, Station};
use crate::error::{Error, Result};
use crate::photon::{expand_in_settings, PhotonPairState};
use crate::qstate::{
    hermitian_eigenvalues, hermiticity_error, Ket, ALGEBRAIC_TOL, DENSE_CAP, PSD_FLOOR,
};

/// Branch amplitudes below this magnitude are dropped.
pub const PRUNE_TOL: f64 = 1e-14;

/// Pointer readings of the array in the order `(LV, LH, RV, RH)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointerConfiguration {
    bits: [u8; 4],
}

impl PointerConfiguration {
    pub const READY: Self = Self { bits: [0, 0, 0, 0] };

    pub fn new(bits: [u8; 4]) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidConfiguration(format!("{bits:?}")));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> [u8; 4] {
        self.bits
    }

    pub fn bit(&self, id: DetectorId) -> u8 {
        self.bits[id.index()]
    }

    /// Exactly one detector fired at each station.
    pub fn is_post_absorption(&self) -> bool {
        self.bits[0] + self.bits[1] == 1 && self.bits[2] + self.bits[3] == 1
    }

    /// Index into the 16-dimensional pointer space, LV most significant.
    pub fn pointer_index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| acc * 2 + b as usize)
    }

    /// Which of the station's two detectors fired, if either.
    pub fn fired(&self, station: Station) -> Option<DetectorId> {
        let base = match station {
            Station::L => 0,
            Station::R => 2,
        };
        match (self.bits[base], self.bits[base + 1]) {
            (1, 0) => Some(DetectorId::ALL[base]),
            (0, 1) => Some(DetectorId::ALL[base + 1]),
            _ => None,
        }
    }
}

/// The array before any photon arrives: `(0,0,0,0)`.
pub fn ready_state() -> PointerConfiguration {
    PointerConfiguration::READY
}

impl fmt::Display for PointerConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for PointerConfiguration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidConfiguration(s.to_string())),
            })
            .collect::<Result<_>>()?;
        let bits: [u8; 4] = digits
            .try_into()
            .map_err(|_| Error::InvalidConfiguration(s.to_string()))?;
        Self::new(bits)
    }
}

impl Serialize for PointerConfiguration {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PointerConfiguration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn config(s: &str) -> PointerConfiguration {
    s.parse().expect("static configuration literal")
}

/// Post-absorption superposition of the array: one amplitude per pointer
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSet {
    branches: Vec<(PointerConfiguration, Complex64)>,
}

impl BranchSet {
    pub fn new(branches: Vec<(PointerConfiguration, Complex64)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidBranchSet("no branches".into()));
        }
        for (i, (c, a)) in branches.iter().enumerate() {
            if !c.is_post_absorption() {
                return Err(Error::InvalidBranchSet(format!(
                    "{c} is not a post-absorption configuration"
                )));
            }
            if !a.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if branches[..i].iter().any(|(prev, _)| prev == c) {
                return Err(Error::InvalidBranchSet(format!(
                    "duplicate configuration {c}"
                )));
            }
        }
        let norm: f64 = branches.iter().map(|(_, a)| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(Error::InvalidBranchSet(format!("norm {norm} is not 1")));
        }
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[(PointerConfiguration, Complex64)] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn configs(&self) -> Vec<PointerConfiguration> {
        self.branches.iter().map(|(c, _)| *c).collect()
    }

    /// Born weights `|amp|²`, in branch order.
    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|(_, a)| a.norm_sqr()).collect()
    }
}

/// Branches after both photons are absorbed, with the right analyzer rotated
/// by `theta_rel` relative to the left one.
///
/// Order is `1001, 0110` (opposite outcomes) then `1010, 0101` (similar
/// outcomes); vanishing branches are pruned, so multiples of π/2 give two
/// branches and other angles give four.
pub fn build_branches(theta_rel: f64) -> BranchSet {
    let amps = *expand_in_settings(&PhotonPairState::singlet(), theta_rel).amps();
    // amps are over (V_L V'_R, V_L H'_R, H_L V'_R, H_L H'_R)
    let ordered = [
        (config("1001"), amps[1]),
        (config("0110"), amps[2]),
        (config("1010"), amps[0]),
        (config("0101"), amps[3]),
    ];
    let branches = ordered
        .into_iter()
        .filter(|(_, a)| a.norm() >= PRUNE_TOL)
        .collect();
    BranchSet::new(branches).expect("singlet expansion is a valid branch set")
}

/// Contribution of one detector to entry `(row, col)` of the reduced matrix.
pub fn local_coherence(row_bit: u8, col_bit: u8, factor: Complex64) -> Complex64 {
    match (row_bit, col_bit) {
        (1, 0) => factor,
        (0, 1) => factor.conj(),
        _ => Complex64::new(1.0, 0.0),
    }
}

/// Density matrix over the `K` pointer configurations of a branch set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix {
    configs: Vec<PointerConfiguration>,
    entries: DMatrix<Complex64>,
}

impl ReducedDensityMatrix {
    pub fn configs(&self) -> &[PointerConfiguration] {
        &self.configs
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn entry(&self, row: PointerConfiguration, col: PointerConfiguration) -> Option<Complex64> {
        let i = self.configs.iter().position(|c| *c == row)?;
        let j = self.configs.iter().position(|c| *c == col)?;
        Some(self.entries[(i, j)])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.entries)
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > ALGEBRAIC_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let min = self.min_eigenvalue();
        if min < PSD_FLOOR {
            return Err(Error::NotPsd(min));
        }
        Ok(())
    }

    /// Largest entry magnitude off the diagonal.
    pub fn offdiagonal_norm(&self) -> f64 {
        offdiagonal_norm(self)
    }

    /// Largest entrywise difference from another matrix over the same configurations.
    pub fn max_deviation(&self, other: &ReducedDensityMatrix) -> Result<f64> {
        if self.configs != other.configs {
            return Err(Error::InvalidBranchSet(format!(
                "configuration lists differ: {:?} vs {:?}",
                self.configs, other.configs
            )));
        }
        Ok((&self.entries - &other.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }
}

/// Largest `|ρ_ij|` with `i ≠ j`.
pub fn offdiagonal_norm(rho: &ReducedDensityMatrix) -> f64 {
    let n = rho.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(rho.entries[(i, j)].norm());
            }
        }
    }
    worst
}

/// Reduced density matrix from the per-detector decoherence factors.
pub fn reduced_density_structured(
    branches: &BranchSet,
    detectors: &DetectorArray,
) -> ReducedDensityMatrix {
    let factors = detectors.factors();
    let b = branches.branches();
    let k = b.len();
    let mut entries = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        let (ci, ai) = b[i];
        entries[(i, i)] = Complex64::new(ai.norm_sqr(), 0.0);
        for j in i + 1..k {
            let (cj, aj) = b[j];
            let mut z = ai * aj.conj();
            for id in DetectorId::ALL {
                z *= local_coherence(ci.bit(id), cj.bit(id), factors[id.index()].value());
            }
            entries[(i, j)] = z;
            entries[(j, i)] = z.conj();
        }
    }
    ReducedDensityMatrix {
        configs: branches.configs(),
        entries,
    }
}

/// Number of complex amplitudes in one ensemble element of the dense route.
pub fn dense_ket_len(dims: [usize; 4]) -> usize {
    dims.iter()
        .try_fold(1usize, |acc, &m| acc.checked_mul(2 * m))
        .unwrap_or(usize::MAX)
}

/// Reduced density matrix by explicit ensemble construction and partial trace.
///
/// Subsystems are ordered `(LV pointer, LV internal, LH pointer, LH internal,
/// RV …, RH …)`. Each ensemble element puts `U|μ⟩` on a detector whose
/// pointer reads 1 and `|μ⟩` on an idle one.
pub fn reduced_density_dense_oracle(
    branches: &BranchSet,
    detectors: &DetectorArray,
) -> Result<ReducedDensityMatrix> {
    let dims = detectors.dims();
    let len = dense_ket_len(dims);
    if len > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            entries: len,
            cap: DENSE_CAP,
        });
    }

    let models: Vec<_> = detectors.iter().collect();
    let pointer = |bit: u8| Ket::basis(2, bit as usize);
    let internal = |d: usize, mu: usize, fired: bool| -> Result<Ket> {
        if fired {
            let col = models[d].absorption().column(mu);
            Ket::from_amps(col.iter().copied().collect())
        } else {
            Ket::basis(models[d].m(), mu)
        }
    };

    let mut reduced = DMatrix::<Complex64>::zeros(16, 16);
    let total: usize = dims.iter().product();
    for flat in 0..total {
        // decode flat index into (μ, ν, σ, τ)
        let mut rest = flat;
        let mut mus = [0usize; 4];
        for d in (0..4).rev() {
            mus[d] = rest % dims[d];
            rest /= dims[d];
        }
        let weight: f64 = (0..4).map(|d| models[d].dist().weights()[mus[d]]).product();
        if weight == 0.0 {
            continue;
        }

        let mut psi: Option<Ket> = None;
        for (cfg, amp) in branches.branches() {
            let mut term = Ket::from_amps(vec![*amp])?;
            for (d, (&bit, &mu)) in cfg.bits().iter().zip(&mus).enumerate() {
                term = term
                    .tensor(&pointer(bit)?)?
                    .tensor(&internal(d, mu, bit == 1)?)?;
            }
            // drop the leading 1-dim factor used as the amplitude carrier
            let term = Ket::new(term.dims()[1..].to_vec(), term.amps().to_vec())?;
            psi = Some(match psi {
                None => term,
                Some(acc) => acc.add(&term)?,
            });
        }
        let psi = psi.expect("branch set is nonempty");
        let part = psi.reduced(&[0, 2, 4, 6])?;
        reduced += part.entries() * Complex64::new(weight, 0.0);
    }

    let configs = branches.configs();
    let k = configs.len();
    let entries = DMatrix::from_fn(k, k, |i, j| {
        reduced[(configs[i].pointer_index(), configs[j].pointer_index())]
    });
    Ok(ReducedDensityMatrix { configs, entries })
}

/// One point of an off-diagonal scaling scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub m: usize,
    pub seeds: usize,
    /// Median over seeds of the largest off-diagonal magnitude.
    pub median_offdiag: f64,
    /// Mean of `|f|²` over every detector of every seed.
    pub mean_factor_sqr: f64,
    pub factor_sqr_std_error: f64,
    /// `Σp²/M`, the Haar expectation of `|f|²`.
    pub expected_factor_sqr: f64,
}

/// Off-diagonal suppression at `θ_rel = 0` for `n_seeds` independent arrays
/// of Haar detectors with internal dimension `m`.
pub fn scaling_point(
    m: usize,
    n_seeds: usize,
    kind: DistKind,
    base_seed: u64,
) -> Result<ScalingPoint> {
    let branches = build_branches(0.0);
    let per_seed: Vec<(f64, [f64; 4])> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = crate::rng::derive_seed(base_seed, s);
            let array = DetectorArray::haar(seed, [m; 4], kind)?;
            let rho = reduced_density_structured(&branches, &array);
            let f2 = array.factors().map(|f| f.value().norm_sqr());
            Ok((rho.offdiagonal_norm(), f2))
        })
        .collect::<Result<_>>()?;

    let mut offdiag: Vec<f64> = per_seed.iter().map(|(o, _)| *o).collect();
    let f2: Vec<f64> = per_seed.iter().flat_map(|(_, f)| *f).collect();
    let n = f2.len() as f64;
    let mean = f2.iter().sum::<f64>() / n;
    let var = f2.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let purity = crate::detector::InternalDistribution::from_kind(m, kind)?.purity();

    Ok(ScalingPoint {
        m,
        seeds: n_seeds,
        median_offdiag: median(&mut offdiag),
        mean_factor_sqr: mean,
        factor_sqr_std_error: (var / n).sqrt(),
        expected_factor_sqr: purity / m as f64,
    })
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{make_detector, DetectorModel};
    use crate::qstate::{DensityMatrix, Operator};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ready_state_is_all_zero() {
        let r = ready_state();
        assert_eq!(r.bits(), [0, 0, 0, 0]);
        assert!(!r.is_post_absorption());
        assert!(BranchSet::new(vec![(r, c(1.0, 0.0))]).is_err());
    }

    #[test]
    fn ready_pointers_leave_photon_amplitudes_alone() {
        let photon = PhotonPairState::singlet().to_ket();
        let ready = (0..4).fold(Ket::from_amps(vec![c(1.0, 0.0)]).unwrap(), |k, _| {
            k.tensor(&Ket::basis(2, 0).unwrap()).unwrap()
        });
        let joint = photon.tensor(&ready).unwrap();
        // ready pointer index is 0, so photon amplitude p sits at p * 16
        for (p, a) in photon.amps().iter().enumerate() {
            assert_eq!(joint.amps()[p * 16], *a);
        }
        assert!((joint.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn configuration_parsing_and_display() {
        let cfg: PointerConfiguration = "1001".parse().unwrap();
        assert_eq!(cfg.bits(), [1, 0, 0, 1]);
        assert_eq!(cfg.to_string(), "1001");
        assert_eq!(cfg.pointer_index(), 9);
        assert_eq!(cfg.fired(Station::L), Some(DetectorId::LV));
        assert_eq!(cfg.fired(Station::R), Some(DetectorId::RH));
        assert!("10a1".parse::<PointerConfiguration>().is_err());
        assert!("101".parse::<PointerConfiguration>().is_err());
        assert_eq!(serde_json::to_string(&cfg).unwrap(), "\"1001\"");
    }

    #[test]
    fn branches_aligned_settings() {
        let b = build_branches(0.0);
        assert_eq!(b.configs(), vec![config("1001"), config("0110")]);
        assert!((b.branches()[0].1 - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((b.branches()[1].1 - c(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn branches_orthogonal_settings() {
        let b = build_branches(PI / 2.0);
        assert_eq!(b.configs(), vec![config("1010"), config("0101")]);
        for (_, a) in b.branches() {
            assert!((a - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn branches_diagonal_settings() {
        let b = build_branches(PI / 4.0);
        assert_eq!(b.len(), 4);
        for w in b.weights() {
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_set_rejects_duplicates_and_bad_norm() {
        let a = config("1001");
        assert!(
            BranchSet::new(vec![(a, c(FRAC_1_SQRT_2, 0.)), (a, c(FRAC_1_SQRT_2, 0.))]).is_err()
        );
        assert!(BranchSet::new(vec![(a, c(0.5, 0.))]).is_err());
    }

    #[test]
    fn orientation_table() {
        let f = c(0.3, 0.4);
        assert_eq!(local_coherence(1, 0, f), f);
        assert_eq!(local_coherence(0, 1, f), f.conj());
        assert_eq!(local_coherence(0, 0, f), c(1.0, 0.0));
        assert_eq!(local_coherence(1, 1, f), c(1.0, 0.0));
    }

    #[test]
    fn structured_diagonal_is_half_at_zero_angle() {
        for seed in 0..5 {
            let det =
                DetectorArray::haar(seed, [3, 5, 2, 7], DistKind::Gibbs { beta: 1.5 }).unwrap();
            let rho = reduced_density_structured(&build_branches(0.0), &det);
            for d in rho.diagonal() {
                assert!((d - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_detectors_keep_full_coherence() {
        let det = DetectorArray::identity([4; 4], DistKind::Uniform).unwrap();
        let rho = reduced_density_structured(&build_branches(0.0), &det);
        assert!((rho.entries()[(0, 1)] - c(-0.5, 0.0)).norm() < 1e-12);
        assert!((rho.offdiagonal_norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn offdiagonal_norm_of_diagonal_matrix_is_zero() {
        let rho = ReducedDensityMatrix {
            configs: vec![config("1001"), config("0110")],
            entries: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                c(0.5, 0.),
                c(0.5, 0.),
            ])),
        };
        assert_eq!(rho.offdiagonal_norm(), 0.0);
    }

    #[test]
    fn single_internal_state_matches_pure_projector() {
        // M = 1: the ensemble is one pure state; absorbing detectors pick up
        // the phase of their 1×1 unitary.
        let det = DetectorArray::haar(17, [1; 4], DistKind::Uniform).unwrap();
        let b = build_branches(0.0);
        let dense = reduced_density_dense_oracle(&b, &det).unwrap();
        let phase = |id: DetectorId| det.get(id).absorption()[(0, 0)];
        // branch 1001 carries U_LV U_RH, branch 0110 carries U_LH U_RV
        let a = c(FRAC_1_SQRT_2, 0.0) * phase(DetectorId::LV) * phase(DetectorId::RH);
        let bb = c(-FRAC_1_SQRT_2, 0.0) * phase(DetectorId::LH) * phase(DetectorId::RV);
        let pure = Ket::from_amps(vec![a, bb]).unwrap();
        let proj = Operator::outer(&pure, &pure).unwrap();
        assert!((dense.entries() - proj.entries()).norm() < 1e-12);
    }

    /// Literal route: sum the full projectors over the ensemble, then
    /// partial-trace with `Operator::partial_trace`. Only feasible for M ≤ 2.
    fn projector_route(b: &BranchSet, det: &DetectorArray) -> DMatrix<Complex64> {
        let dims = det.dims();
        let sub: Vec<usize> = dims.iter().flat_map(|&m| [2, m]).collect();
        let mut rho = Operator::zeros(sub.clone()).unwrap();
        let total: usize = dims.iter().product();
        for flat in 0..total {
            let mut rest = flat;
            let mut mus = [0; 4];
            for d in (0..4).rev() {
                mus[d] = rest % dims[d];
                rest /= dims[d];
            }
            let side: usize = sub.iter().product();
            let mut amps = vec![c(0.0, 0.0); side];
            for (cfg, amp) in b.branches() {
                // amplitude of |bits, internals⟩ = amp · Π_d χ_d[i_d]
                let chis: Vec<Vec<Complex64>> = DetectorId::ALL
                    .iter()
                    .map(|&id| {
                        let m = det.get(id);
                        if cfg.bit(id) == 1 {
                            m.absorption()
                                .column(mus[id.index()])
                                .iter()
                                .copied()
                                .collect()
                        } else {
                            let mut e = vec![c(0.0, 0.0); m.m()];
                            e[mus[id.index()]] = c(1.0, 0.0);
                            e
                        }
                    })
                    .collect();
                for i0 in 0..dims[0] {
                    for i1 in 0..dims[1] {
                        for i2 in 0..dims[2] {
                            for i3 in 0..dims[3] {
                                let bits = cfg.bits().map(|x| x as usize);
                                let idx =
                                    ((((((bits[0] * dims[0] + i0) * 2 + bits[1]) * dims[1] + i1)
                                        * 2
                                        + bits[2])
                                        * dims[2]
                                        + i2)
                                        * 2
                                        + bits[3])
                                        * dims[3]
                                        + i3;
                                amps[idx] +=
                                    amp * chis[0][i0] * chis[1][i1] * chis[2][i2] * chis[3][i3];
                            }
                        }
                    }
                }
            }
            let w: f64 = (0..4)
                .map(|d| det.iter().nth(d).unwrap().dist().weights()[mus[d]])
                .product();
            let k = Ket::new(sub.clone(), amps).unwrap();
            rho = rho
                .add(&Operator::outer(&k, &k).unwrap().scale(c(w, 0.0)))
                .unwrap();
        }
        let rho = DensityMatrix::new(rho).unwrap();
        let red = rho.partial_trace(&[0, 2, 4, 6]).unwrap();
        let cfgs = b.configs();
        DMatrix::from_fn(cfgs.len(), cfgs.len(), |i, j| {
            red.entries()[(cfgs[i].pointer_index(), cfgs[j].pointer_index())]
        })
    }

    #[test]
    fn dense_oracle_matches_literal_projector_route() {
        for (seed, dims, theta) in [
            (1, [1, 2, 1, 2], 0.0),
            (2, [2, 2, 2, 2], PI / 8.0),
            (3, [2, 1, 2, 2], PI / 4.0),
        ] {
            let det = DetectorArray::haar(seed, dims, DistKind::Gibbs { beta: 0.7 }).unwrap();
            let b = build_branches(theta);
            let dense = reduced_density_dense_oracle(&b, &det).unwrap();
            let literal = projector_route(&b, &det);
            assert!((dense.entries() - literal).norm() < 1e-12);
        }
    }

    #[test]
    fn structured_matches_dense_small_m() {
        for seed in 0..6u64 {
            for m in 1..=3 {
                for theta in [0.0, PI / 8.0, PI / 2.0, 1.1] {
                    let det =
                        DetectorArray::haar(seed, [m, 4 - m, m, 1 + m % 3], DistKind::Uniform)
                            .unwrap();
                    let b = build_branches(theta);
                    let s = reduced_density_structured(&b, &det);
                    let d = reduced_density_dense_oracle(&b, &det).unwrap();
                    assert!(
                        s.max_deviation(&d).unwrap() < 1e-12,
                        "seed {seed} m {m} theta {theta}"
                    );
                }
            }
        }
    }

    #[test]
    fn dense_oracle_refuses_large_arrays() {
        let det = DetectorArray::haar(1, [17; 4], DistKind::Uniform).unwrap();
        let err = reduced_density_dense_oracle(&build_branches(0.0), &det).unwrap_err();
        assert_eq!(
            err,
            Error::DenseCapExceeded {
                entries: 34usize.pow(4),
                cap: DENSE_CAP
            }
        );
    }

    #[test]
    fn reduced_matrices_are_valid_states() {
        for seed in 0..10 {
            for theta in [0.0, 0.2, PI / 4.0, PI / 2.0, 2.0] {
                let det = DetectorArray::haar(seed, [2, 3, 4, 5], DistKind::Uniform).unwrap();
                let rho = reduced_density_structured(&build_branches(theta), &det);
                rho.validate().unwrap();
                for i in 0..rho.dim() {
                    for j in 0..rho.dim() {
                        assert_eq!(rho.entries()[(j, i)], rho.entries()[(i, j)].conj());
                    }
                }
            }
        }
    }

    #[test]
    fn suppression_is_attributable_to_each_detector() {
        for theta in [0.0, 0.4] {
            let b = build_branches(theta);
            let det = DetectorArray::haar(23, [3, 4, 2, 5], DistKind::Uniform).unwrap();
            let full = reduced_density_structured(&b, &det);
            for id in DetectorId::ALL {
                let f = det.get(id).decoherence_factor().value();
                let tamed = det.with_detector(
                    DetectorModel::identity(id, det.get(id).dist().clone()).unwrap(),
                );
                let partial = reduced_density_structured(&b, &tamed);
                let dense_partial = reduced_density_dense_oracle(&b, &tamed).unwrap();
                assert!(partial.max_deviation(&dense_partial).unwrap() < 1e-12);
                let cfgs = b.configs();
                for i in 0..b.len() {
                    for j in 0..b.len() {
                        let expected = partial.entries()[(i, j)]
                            * local_coherence(cfgs[i].bit(id), cfgs[j].bit(id), f);
                        assert!((full.entries()[(i, j)] - expected).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn off_diagonal_vanishes_for_large_environments() {
        let b = build_branches(0.0);
        let small = (0..1000u64)
            .filter(|&s| {
                let det = DetectorArray::haar(s, [16; 4], DistKind::Uniform).unwrap();
                reduced_density_structured(&b, &det).offdiagonal_norm() < 1e-3
            })
            .count();
        assert!(small as f64 / 1000.0 > 0.99, "{small}");
    }

    #[test]
    fn m8_offdiagonal_scale_and_oracle_agreement() {
        let b = build_branches(0.0);
        let mut vals: Vec<f64> = (0..200u64)
            .map(|s| {
                let det = DetectorArray::haar(s, [8; 4], DistKind::Uniform).unwrap();
                reduced_density_structured(&b, &det).offdiagonal_norm()
            })
            .collect();
        let med = median(&mut vals);
        // (1/8)^4 / 2 ≈ 1.2e-4; median of a product of four |f| sits below its rms
        assert!(med > 1e-5 && med < 1e-3, "{med}");
        // at M = 8 the dense route holds 16^4 amplitudes per element; spot-check one array
        let det = DetectorArray::new([
            make_detector(DetectorId::LV, 8, DistKind::Uniform, 1).unwrap(),
            make_detector(DetectorId::LH, 2, DistKind::Uniform, 2).unwrap(),
            make_detector(DetectorId::RV, 2, DistKind::Uniform, 3).unwrap(),
            make_detector(DetectorId::RH, 8, DistKind::Uniform, 4).unwrap(),
        ])
        .unwrap();
        let s = reduced_density_structured(&b, &det);
        let d = reduced_density_dense_oracle(&b, &det).unwrap();
        assert!(s.max_deviation(&d).unwrap() < 1e-12);
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(-4.0)))
            .collect();
        assert!((loglog_slope(&pts) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn internal_distribution_is_not_consulted_for_diagonals() {
        let b = build_branches(0.3);
        let a = DetectorArray::haar(1, [3; 4], DistKind::Uniform).unwrap();
        let g = DetectorArray::haar(99, [5, 2, 7, 1], DistKind::Gibbs { beta: 3.0 }).unwrap();
        assert_eq!(
            reduced_density_structured(&b, &a).diagonal(),
            reduced_density_structured(&b, &g).diagonal()
        );
    }
}
