//! Dense complex linear algebra for small composite systems.
//!
//! A [`Ket`] or [`Operator`] carries the ordered list of its subsystem
//! dimensions; composite indices are row-major over that list (the last
//! subsystem varies fastest). Everything here is dense and guarded by
//! [`DENSE_CAP`]: systems too large for it belong on the structured path in
//! [`crate::chain`].

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum number of complex entries any dense object may hold.
pub const DENSE_CAP: usize = 1 << 20;

/// Tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;

/// Floor below which a negative eigenvalue counts as a PSD violation.
pub const PSD_FLOOR: f64 = -1e-10;

fn checked_product(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn check_subsystems(count: usize, keep: &[usize]) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&index) = keep.iter().find(|&&i| i >= count) {
        return Err(Error::SubsystemOutOfRange { index, count });
    }
    Ok(keep)
}

/// Splits every composite index into (kept index, traced index) and groups
/// the composite indices by their traced index.
struct TraceLayout {
    kept_dims: Vec<usize>,
    kept_len: usize,
    /// `groups[t]` lists `(composite, kept)` pairs sharing traced index `t`.
    groups: Vec<Vec<(usize, usize)>>,
}

impl TraceLayout {
    fn new(dims: &[usize], keep: &[usize]) -> Self {
        let kept_dims: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
        let kept_len: usize = kept_dims.iter().product();
        let total: usize = dims.iter().product();
        let traced_len = total / kept_len.max(1);
        let mut groups = vec![Vec::with_capacity(kept_len); traced_len];

        let mut digits = vec![0usize; dims.len()];
        for composite in 0..total {
            let (mut kept, mut traced) = (0usize, 0usize);
            for (axis, (&digit, &dim)) in digits.iter().zip(dims).enumerate() {
                if keep.binary_search(&axis).is_ok() {
                    kept = kept * dim + digit;
                } else {
                    traced = traced * dim + digit;
                }
            }
            groups[traced].push((composite, kept));

            // advance the mixed-radix counter
            for axis in (0..dims.len()).rev() {
                digits[axis] += 1;
                if digits[axis] < dims[axis] {
                    break;
                }
                digits[axis] = 0;
            }
        }
        Self {
            kept_dims,
            kept_len,
            groups,
        }
    }
}

/// A state vector over an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    dims: Vec<usize>,
    amps: Vec<Complex64>,
}

impl Ket {
    pub fn new(dims: Vec<usize>, amps: Vec<Complex64>) -> Result<Self> {
        let expected = checked_product(&dims).ok_or(Error::DenseCapExceeded {
            entries: usize::MAX,
            cap: DENSE_CAP,
        })?;
        if expected > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                entries: expected,
                cap: DENSE_CAP,
            });
        }
        if amps.len() != expected {
            return Err(Error::LengthMismatch {
                dims,
                len: amps.len(),
                expected,
            });
        }
        if let Some(i) = amps.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, amps })
    }

    /// Computational basis vector `|index⟩` of a single subsystem of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::SubsystemOutOfRange { index, count: dim });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Self::new(vec![dim], amps)
    }

    /// A single-subsystem ket with the given amplitudes.
    pub fn from_amps(amps: Vec<Complex64>) -> Result<Self> {
        Self::new(vec![amps.len()], amps)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= ALGEBRAIC_TOL
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dims: self.dims.clone(),
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    /// Entrywise sum of two kets over the same subsystems.
    pub fn add(&self, other: &Ket) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch(self.dims.clone(), other.dims.clone()));
        }
        Ok(Self {
            dims: self.dims.clone(),
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Tensor product under the default dense cap.
    pub fn tensor(&self, other: &Ket) -> Result<Self> {
        self.tensor_capped(other, DENSE_CAP)
    }

    pub fn tensor_capped(&self, other: &Ket, cap: usize) -> Result<Self> {
        let entries = self
            .len()
            .checked_mul(other.len())
            .filter(|&n| n <= cap)
            .ok_or(Error::DenseCapExceeded {
                entries: self.len().saturating_mul(other.len()),
                cap,
            })?;
        let mut amps = Vec::with_capacity(entries);
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(Self { dims, amps })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> Result<Complex64> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch(self.dims.clone(), other.dims.clone()));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Partial trace of `|self⟩⟨self|` without materializing the projector.
    pub fn reduced(&self, keep: &[usize]) -> Result<Operator> {
        let keep = check_subsystems(self.dims.len(), keep)?;
        let layout = TraceLayout::new(&self.dims, &keep);
        let n = layout.kept_len;
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        for group in &layout.groups {
            for &(ri, ki) in group {
                let a = self.amps[ri];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for &(rj, kj) in group {
                    out[(ki, kj)] += a * self.amps[rj].conj();
                }
            }
        }
        Ok(Operator {
            dims: layout.kept_dims,
            entries: out,
        })
    }
}

/// A square complex operator over an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dims: Vec<usize>,
    entries: DMatrix<Complex64>,
}

impl Operator {
    pub fn new(dims: Vec<usize>, entries: DMatrix<Complex64>) -> Result<Self> {
        let side = checked_product(&dims).unwrap_or(usize::MAX);
        if entries.nrows() != side || entries.ncols() != side {
            return Err(Error::LengthMismatch {
                dims,
                len: entries.nrows() * entries.ncols(),
                expected: side.saturating_mul(side),
            });
        }
        let count = side.saturating_mul(side);
        if count > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                entries: count,
                cap: DENSE_CAP,
            });
        }
        if let Some(i) = entries.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, entries })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let side = checked_product(&dims).unwrap_or(usize::MAX);
        if side.saturating_mul(side) > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                entries: side.saturating_mul(side),
                cap: DENSE_CAP,
            });
        }
        Self::new(dims, DMatrix::zeros(side, side))
    }

    /// `|a⟩⟨b|`.
    pub fn outer(a: &Ket, b: &Ket) -> Result<Self> {
        if a.dims != b.dims {
            return Err(Error::DimsMismatch(a.dims.clone(), b.dims.clone()));
        }
        let n = a.len();
        if n.saturating_mul(n) > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                entries: n.saturating_mul(n),
                cap: DENSE_CAP,
            });
        }
        let entries = DMatrix::from_fn(n, n, |i, j| a.amps[i] * b.amps[j].conj());
        Ok(Self {
            dims: a.dims.clone(),
            entries,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn side(&self) -> usize {
        self.entries.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            entries: self.entries.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dims: self.dims.clone(),
            entries: &self.entries * factor,
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch(self.dims.clone(), other.dims.clone()));
        }
        Ok(Self {
            dims: self.dims.clone(),
            entries: &self.entries + &other.entries,
        })
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    /// Sorted (ascending) eigenvalues of the Hermitian part.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    /// Traces out every subsystem not in `keep`. Kept subsystems retain their
    /// original order regardless of the order of `keep`.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let keep = check_subsystems(self.dims.len(), keep)?;
        let layout = TraceLayout::new(&self.dims, &keep);
        let n = layout.kept_len;
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        for group in &layout.groups {
            for &(ri, ki) in group {
                for &(rj, kj) in group {
                    out[(ki, kj)] += self.entries[(ri, rj)];
                }
            }
        }
        Ok(Self {
            dims: layout.kept_dims,
            entries: out,
        })
    }
}

pub(crate) fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let herm = op.hermiticity_error();
        if herm > ALGEBRAIC_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let trace = op.trace();
        if (trace.re - 1.0).abs() > ALGEBRAIC_TOL || trace.im.abs() > ALGEBRAIC_TOL {
            return Err(Error::InvalidTrace(trace.re));
        }
        let min = op.eigenvalues().first().copied().unwrap_or(0.0);
        if min < PSD_FLOOR {
            return Err(Error::NotPsd(min));
        }
        Ok(Self(op))
    }

    /// `|ψ⟩⟨ψ|` for a normalized ket.
    pub fn pure(ket: &Ket) -> Result<Self> {
        Self::new(Operator::outer(ket, ket)?)
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn dims(&self) -> &[usize] {
        self.0.dims()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        self.0.entries()
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        Ok(Self(self.0.partial_trace(keep)?))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<Self> {
        let (a, b) = (self.entries(), other.entries());
        let side = a.nrows() * b.nrows();
        if side.saturating_mul(side) > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                entries: side.saturating_mul(side),
                cap: DENSE_CAP,
            });
        }
        let mut dims = self.dims().to_vec();
        dims.extend_from_slice(other.dims());
        Ok(Self(Operator::new(dims, a.kronecker(b))?))
    }
}
