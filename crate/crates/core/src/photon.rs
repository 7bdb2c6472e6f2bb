//! Polarization states of the photon pair.
//!
//! Amplitudes are stored over the two-photon basis
//! `(V_L V_R, V_L H_R, H_L V_R, H_L H_R)`, where each station's `V`/`H`
//! are taken relative to that station's own measurement setting.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::qstate::{Ket, ALGEBRAIC_TOL};

/// A linear-polarization analyzer angle. Polarization bases are π-periodic,
/// so `theta` is kept in `[0, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    theta: f64,
    label: String,
}

impl MeasurementSetting {
    /// Panics if `theta` is not finite.
    pub fn new(label: impl Into<String>, theta: f64) -> Self {
        assert!(theta.is_finite(), "measurement angle must be finite");
        Self {
            theta: canonical_angle(theta),
            label: label.into(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Reduces an angle into `[0, π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π for tiny negative inputs
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Rotation taking `(V, H)` coordinates to `(V', H')` coordinates, with
/// `|V'⟩ = cos θ |V⟩ + sin θ |H⟩` and `|H'⟩ = −sin θ |V⟩ + cos θ |H⟩` as rows.
pub fn basis_rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Two-photon polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPairState {
    amps: [Complex64; 4],
}

impl PhotonPairState {
    /// Builds a state from raw amplitudes; `None` unless normalized.
    pub fn new(amps: [Complex64; 4]) -> Option<Self> {
        let s = Self { amps };
        ((s.norm_sqr() - 1.0).abs() <= ALGEBRAIC_TOL).then_some(s)
    }

    /// `(|V⟩_L |H⟩_R − |H⟩_L |V⟩_R)/√2`.
    pub fn singlet() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            amps: [
                z,
                Complex64::new(FRAC_1_SQRT_2, 0.0),
                Complex64::new(-FRAC_1_SQRT_2, 0.0),
                z,
            ],
        }
    }

    pub fn amps(&self) -> &[Complex64; 4] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Re-expresses the state with the left analyzer at `theta_left` and the
    /// right analyzer at `theta_right`.
    pub fn rotate(&self, theta_left: f64, theta_right: f64) -> Self {
        let (l, r) = (basis_rotation(theta_left), basis_rotation(theta_right));
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (i, slot) in out.iter_mut().enumerate() {
            let (li, ri) = (i / 2, i % 2);
            for j in 0..4 {
                let (lj, rj) = (j / 2, j % 2);
                *slot += self.amps[j] * (l[(li, lj)] * r[(ri, rj)]);
            }
        }
        Self { amps: out }
    }

    /// The state as a two-qubit ket with dims `[2, 2]` (index 0 = V, 1 = H).
    pub fn to_ket(&self) -> Ket {
        Ket::new(vec![2, 2], self.amps.to_vec()).expect("four finite amplitudes")
    }
}

/// Amplitudes over `(V_L V'_R, V_L H'_R, H_L V'_R, H_L H'_R)` with only the
/// right analyzer rotated by `theta_rel`.
pub fn expand_in_settings(state: &PhotonPairState, theta_rel: f64) -> PhotonPairState {
    state.rotate(0.0, theta_rel)
}
