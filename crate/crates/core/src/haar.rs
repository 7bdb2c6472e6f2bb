//! Haar-distributed unitaries.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Draws an `m × m` unitary from the Haar measure: QR-decompose a complex
/// Ginibre matrix, then multiply each column of Q by the phase of the
/// matching diagonal entry of R so the distribution is exactly invariant.
pub fn haar_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let ginibre = DMatrix::from_fn(m, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        let d = r[(j, j)];
        let n = d.norm();
        let phase = if n > 0.0 {
            d / n
        } else {
            Complex64::new(1.0, 0.0)
        };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Largest entrywise deviation of `U†U` from the identity.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let prod = u.adjoint() * u;
    let eye = DMatrix::<Complex64>::identity(u.nrows(), u.ncols());
    (prod - eye).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn sampled_matrices_are_unitary() {
        let mut rng = seeded_rng(11);
        for m in [1, 2, 5, 16, 32] {
            let u = haar_unitary(m, &mut rng);
            assert!(unitarity_error(&u) < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = haar_unitary(4, &mut seeded_rng(5));
        let b = haar_unitary(4, &mut seeded_rng(5));
        assert_eq!(a, b);
    }

    #[test]
    fn diagonal_moments_match_haar() {
        // For Haar U(m): E|U_00|^2 = 1/m, E|U_00|^4 = 2/(m(m+1)), E[U_00] = 0.
        let m = 4;
        let n = 20_000;
        let mut rng = seeded_rng(99);
        let (mut s2, mut s4, mut s1) = (0.0, 0.0, Complex64::new(0.0, 0.0));
        for _ in 0..n {
            let u = haar_unitary(m, &mut rng);
            let x = u[(0, 0)];
            s1 += x;
            s2 += x.norm_sqr();
            s4 += x.norm_sqr().powi(2);
        }
        let nf = n as f64;
        assert!((s2 / nf - 0.25).abs() < 0.01);
        assert!((s4 / nf - 0.1).abs() < 0.006);
        assert!((s1 / nf).norm() < 0.015);
    }
}
