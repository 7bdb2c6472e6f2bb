//! Finite model of one detector.
//!
//! A detector has a two-valued pointer (0 = idle, 1 = absorbed the photon)
//! and `M` internal states `|μ⟩` drawn from a distribution `p`. Absorbing a
//! photon evolves the internal state by a unitary, `|μ'⟩ = U|μ⟩`, and the
//! whole effect of the detector on interference between branches is the
//! single number `f = Σ_μ p(μ) ⟨μ|μ'⟩`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::{haar_unitary, unitarity_error};
use crate::rng::{derive_seed, seeded_rng};

const UNITARITY_TOL: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Station {
    L,
    R,
}

/// Output port of a station's polarizing beam splitter, relative to that
/// station's analyzer angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    V,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorId {
    pub station: Station,
    pub port: Port,
}

impl DetectorId {
    pub const LV: Self = Self::new(Station::L, Port::V);
    pub const LH: Self = Self::new(Station::L, Port::H);
    pub const RV: Self = Self::new(Station::R, Port::V);
    pub const RH: Self = Self::new(Station::R, Port::H);

    /// The four detectors in array order.
    pub const ALL: [Self; 4] = [Self::LV, Self::LH, Self::RV, Self::RH];

    pub const fn new(station: Station, port: Port) -> Self {
        Self { station, port }
    }

    /// Position in the array order `(LV, LH, RV, RH)`.
    pub const fn index(self) -> usize {
        let s = match self.station {
            Station::L => 0,
            Station::R => 2,
        };
        let p = match self.port {
            Port::V => 0,
            Port::H => 1,
        };
        s + p
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:?}", self.station, self.port)
    }
}

/// Which family of internal distribution to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistKind {
    Uniform,
    /// Canonical weights `∝ exp(−β E_μ)` over the ladder `E_μ = μ/M`.
    Gibbs {
        #[serde(with = "beta_serde")]
        beta: f64,
    },
}

/// JSON has no infinity, so `β = ∞` is written as the string `"inf"`.
mod beta_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beta: &f64, s: S) -> Result<S::Ok, S::Error> {
        if beta.is_infinite() && *beta > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*beta)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(b) => Ok(b),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(de::Error::custom(format!("invalid beta '{t}'"))),
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistKind::Uniform => f.write_str("uniform"),
            DistKind::Gibbs { beta } => write!(f, "gibbs:{beta}"),
        }
    }
}

/// Probability distribution over a detector's internal states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InternalDistribution {
    weights: Vec<f64>,
}

impl InternalDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// `β = ∞` puts all weight on the ground state.
    pub fn gibbs(m: usize, beta: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::ZeroDimension);
        }
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::InvalidBeta(beta));
        }
        let mut weights = if beta.is_infinite() {
            let mut w = vec![0.0; m];
            w[0] = 1.0;
            w
        } else {
            (0..m)
                .map(|mu| (-beta * mu as f64 / m as f64).exp())
                .collect::<Vec<_>>()
        };
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { weights })
    }

    pub fn from_kind(m: usize, kind: DistKind) -> Result<Self> {
        match kind {
            DistKind::Uniform => Self::uniform(m),
            DistKind::Gibbs { beta } => Self::gibbs(m, beta),
        }
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_μ p(μ)²`.
    pub fn purity(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// `Σ_μ p(μ) ⟨μ|μ'⟩` for one detector. Its modulus never exceeds 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoherenceFactor(pub Complex64);

impl DecoherenceFactor {
    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn norm(self) -> f64 {
        self.0.norm()
    }
}

/// One detector: identity, internal distribution and absorption unitary.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    id: DetectorId,
    dist: InternalDistribution,
    absorption: DMatrix<Complex64>,
    seed: u64,
    sampler: WeightedIndex<f64>,
}

impl DetectorModel {
    pub fn with_absorption(
        id: DetectorId,
        dist: InternalDistribution,
        absorption: DMatrix<Complex64>,
        seed: u64,
    ) -> Result<Self> {
        let m = dist.m();
        if absorption.nrows() != m || absorption.ncols() != m {
            return Err(Error::DimsMismatch(
                vec![m, m],
                vec![absorption.nrows(), absorption.ncols()],
            ));
        }
        let err = unitarity_error(&absorption);
        if err > UNITARITY_TOL {
            return Err(Error::NotUnitary(err));
        }
        let sampler = WeightedIndex::new(dist.weights())
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(Self {
            id,
            dist,
            absorption,
            seed,
            sampler,
        })
    }

    /// A detector whose absorption leaves the internal state untouched.
    pub fn identity(id: DetectorId, dist: InternalDistribution) -> Result<Self> {
        let m = dist.m();
        Self::with_absorption(id, dist, DMatrix::identity(m, m), 0)
    }

    pub fn id(&self) -> DetectorId {
        self.id
    }

    pub fn dist(&self) -> &InternalDistribution {
        &self.dist
    }

    pub fn m(&self) -> usize {
        self.dist.m()
    }

    pub fn absorption(&self) -> &DMatrix<Complex64> {
        &self.absorption
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn decoherence_factor(&self) -> DecoherenceFactor {
        DecoherenceFactor(
            self.dist
                .weights()
                .iter()
                .enumerate()
                .map(|(mu, &p)| self.absorption[(mu, mu)] * p)
                .sum(),
        )
    }

    /// `⟨μ|μ'⟩ = U[μ][μ]`.
    pub fn overlap(&self, mu: usize) -> Result<Complex64> {
        if mu >= self.m() {
            return Err(Error::InternalIndexOutOfRange {
                index: mu,
                m: self.m(),
            });
        }
        Ok(self.absorption[(mu, mu)])
    }

    /// Draws an internal state index from the detector's distribution.
    pub fn sample_internal<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }
}

/// Builds a detector with a Haar-random absorption unitary drawn from `seed`.
pub fn make_detector(id: DetectorId, m: usize, kind: DistKind, seed: u64) -> Result<DetectorModel> {
    let dist = InternalDistribution::from_kind(m, kind)?;
    let u = haar_unitary(m, &mut seeded_rng(seed));
    DetectorModel::with_absorption(id, dist, u, seed)
}

/// The four detectors of one experiment, in the order `(LV, LH, RV, RH)`.
#[derive(Debug, Clone)]
pub struct DetectorArray {
    detectors: [DetectorModel; 4],
}

impl DetectorArray {
    pub fn new(detectors: [DetectorModel; 4]) -> Result<Self> {
        for (position, (d, expected)) in detectors.iter().zip(DetectorId::ALL).enumerate() {
            if d.id() != expected {
                return Err(Error::DetectorOrder {
                    position,
                    found: d.id().to_string(),
                });
            }
        }
        Ok(Self { detectors })
    }

    /// Haar detectors whose seeds derive from `(seed, detector index)`.
    pub fn haar(seed: u64, dims: [usize; 4], kind: DistKind) -> Result<Self> {
        let mut built = Vec::with_capacity(4);
        for (id, m) in DetectorId::ALL.into_iter().zip(dims) {
            built.push(make_detector(
                id,
                m,
                kind,
                derive_seed(seed, id.index() as u64),
            )?);
        }
        Self::new(built.try_into().expect("four detectors"))
    }

    /// Detectors that never disturb their internal state.
    pub fn identity(dims: [usize; 4], kind: DistKind) -> Result<Self> {
        let mut built = Vec::with_capacity(4);
        for (id, m) in DetectorId::ALL.into_iter().zip(dims) {
            built.push(DetectorModel::identity(
                id,
                InternalDistribution::from_kind(m, kind)?,
            )?);
        }
        Self::new(built.try_into().expect("four detectors"))
    }

    pub fn get(&self, id: DetectorId) -> &DetectorModel {
        &self.detectors[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetectorModel> {
        self.detectors.iter()
    }

    /// Copy of the array with one detector swapped out.
    pub fn with_detector(&self, model: DetectorModel) -> Self {
        let mut detectors = self.detectors.clone();
        let i = model.id().index();
        detectors[i] = model;
        Self { detectors }
    }

    pub fn factors(&self) -> [DecoherenceFactor; 4] {
        std::array::from_fn(|i| self.detectors[i].decoherence_factor())
    }

    pub fn dims(&self) -> [usize; 4] {
        std::array::from_fn(|i| self.detectors[i].m())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    #[test]
    fn uniform_weights() {
        let d = make_detector(DetectorId::LV, 4, DistKind::Uniform, 1).unwrap();
        assert_eq!(d.dist().weights(), &[0.25; 4]);
    }

    #[test]
    fn gibbs_limits() {
        let d = make_detector(DetectorId::LV, 2, DistKind::Gibbs { beta: 0.0 }, 1).unwrap();
        assert_eq!(d.dist().weights(), &[0.5, 0.5]);
        let cold = InternalDistribution::gibbs(2, 1e4).unwrap();
        assert!((cold.weights()[0] - 1.0).abs() < 1e-12);
        assert!(cold.weights()[1] < 1e-12);
        let frozen = InternalDistribution::gibbs(3, f64::INFINITY).unwrap();
        assert_eq!(frozen.weights(), &[1.0, 0.0, 0.0]);
        // ratio between neighbours on the ladder E = μ/M
        let g = InternalDistribution::gibbs(4, 2.0).unwrap();
        assert!((g.weights()[1] / g.weights()[0] - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            make_detector(DetectorId::LV, 0, DistKind::Uniform, 1).unwrap_err(),
            Error::ZeroDimension
        );
        assert_eq!(
            make_detector(DetectorId::LV, 2, DistKind::Gibbs { beta: -1.0 }, 1).unwrap_err(),
            Error::InvalidBeta(-1.0)
        );
        let not_unitary = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            DetectorModel::with_absorption(
                DetectorId::RH,
                InternalDistribution::uniform(2).unwrap(),
                not_unitary,
                0
            ),
            Err(Error::NotUnitary(_))
        ));
        assert!(InternalDistribution::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn identity_absorption_gives_unit_factor() {
        let d =
            DetectorModel::identity(DetectorId::LH, InternalDistribution::gibbs(5, 1.3).unwrap())
                .unwrap();
        assert!((d.decoherence_factor().value() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        for mu in 0..5 {
            assert_eq!(d.overlap(mu).unwrap(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn single_internal_state_never_decoheres() {
        for seed in 0..20 {
            let d = make_detector(DetectorId::RV, 1, DistKind::Uniform, seed).unwrap();
            assert!((d.decoherence_factor().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_out_of_range() {
        let d = make_detector(DetectorId::LV, 3, DistKind::Uniform, 1).unwrap();
        assert_eq!(
            d.overlap(3).unwrap_err(),
            Error::InternalIndexOutOfRange { index: 3, m: 3 }
        );
    }

    /// `E|U_μμ| = Γ(3/2) Γ(M) / Γ(M + 1/2)` because `|U_μμ|²` is Beta(1, M−1).
    fn expected_diag_modulus(m: usize) -> f64 {
        // Γ(3/2)Γ(M)/Γ(M+1/2) telescopes to Π_{k<M} k/(k+1/2)
        (1..m).map(|k| k as f64 / (k as f64 + 0.5)).product()
    }

    #[test]
    fn overlap_modulus_statistics() {
        let m = 16;
        let mut all = Vec::new();
        for seed in 0..500 {
            let d = make_detector(DetectorId::LV, m, DistKind::Uniform, seed).unwrap();
            for mu in 0..m {
                let z = d.overlap(mu).unwrap();
                assert!(z.norm() <= 1.0 + 1e-12);
                all.push(z.norm());
            }
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = expected_diag_modulus(m);
        // large-M Rayleigh value √(π/(4M)) is close but not exact
        assert!((expected - (std::f64::consts::PI / (4.0 * m as f64)).sqrt()).abs() < 0.01);
        // columns of one matrix are correlated; allow a generous 6σ on the pooled estimate
        assert!(
            (mean - expected).abs() < 6.0 * (var / n).sqrt(),
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn mean_square_factor_small_m() {
        // E|f|² = Σp²/M for Haar absorption; M = 8 uniform gives 1/64.
        let n = 10_000u64;
        let mean = (0..n)
            .map(|s| make_detector(DetectorId::LV, 8, DistKind::Uniform, s).unwrap())
            .map(|d| d.decoherence_factor().value().norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0 / 64.0).abs() / (1.0 / 64.0) < 0.1, "{mean}");
    }

    #[test]
    fn sampler_frequencies() {
        let d = make_detector(DetectorId::LV, 4, DistKind::Uniform, 3).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut rng = stream_rng(3, 0);
        for _ in 0..n {
            counts[d.sample_internal(&mut rng)] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - 0.25 * n as f64).abs() < 3.0 * sigma,
                "{counts:?}"
            );
        }

        let cold = make_detector(DetectorId::LV, 4, DistKind::Gibbs { beta: 1e6 }, 3).unwrap();
        assert!((0..10_000).all(|_| cold.sample_internal(&mut rng) == 0));
    }

    #[test]
    fn sampler_is_reproducible() {
        let d = make_detector(DetectorId::RH, 7, DistKind::Gibbs { beta: 2.0 }, 9).unwrap();
        let run = || {
            let mut rng = stream_rng(42, 5);
            (0..50)
                .map(|_| d.sample_internal(&mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn array_ordering_enforced() {
        let dist = || InternalDistribution::uniform(2).unwrap();
        let mk = |id| DetectorModel::identity(id, dist()).unwrap();
        let swapped = [
            mk(DetectorId::LV),
            mk(DetectorId::RV),
            mk(DetectorId::LH),
            mk(DetectorId::RH),
        ];
        assert!(matches!(
            DetectorArray::new(swapped),
            Err(Error::DetectorOrder { position: 1, .. })
        ));
        let a = DetectorArray::haar(5, [2, 3, 4, 5], DistKind::Uniform).unwrap();
        assert_eq!(a.dims(), [2, 3, 4, 5]);
        let seeds: Vec<u64> = a.iter().map(|d| d.seed()).collect();
        assert_eq!(seeds.len(), 4);
        assert!(seeds.windows(2).all(|w| w[0] != w[1]));
    }

    proptest! {
        #[test]
        fn factor_modulus_bounded(m in 1usize..12, seed: u64, beta in 0.0f64..20.0) {
            let d = make_detector(DetectorId::LV, m, DistKind::Gibbs { beta }, seed).unwrap();
            prop_assert!(d.decoherence_factor().norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn unit_factor_only_for_identity(m in 2usize..8, seed: u64, beta in 0.0f64..5.0) {
            let d = make_detector(DetectorId::LV, m, DistKind::Gibbs { beta }, seed).unwrap();
            prop_assert!((d.decoherence_factor().value() - Complex64::new(1.0, 0.0)).norm() > 1e-12);
        }
    }
}
