//! Dense complex linear algebra and the operator norms used throughout the crate.
//!
//! Matrices are [`nalgebra::DMatrix`] values over [`Complex64`]. [`ComplexMatrix`] and
//! [`ComplexVector`] are validated wrappers (every entry finite) that deref to the
//! underlying nalgebra types, so all of nalgebra's arithmetic is available on them.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw dense complex matrix.
pub type CMat = DMatrix<Complex64>;
/// Raw dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Relative threshold below which a smallest singular value counts as zero.
pub const SIGMA_TOL_REL: f64 = 1e-10;

const SVD_MAX_ITERS: usize = 10_000;
const HERMITIAN_TOL: f64 = 1e-12;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Complex sign with `sgn(0) = 0`.
#[inline]
pub fn sgn(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z / r
    }
}

/// A dense complex matrix whose entries are all finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(CMat);

impl ComplexMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("matrix contains non-finite entries".into()));
        }
        Ok(ComplexMatrix(m))
    }

    /// Build from row-major rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::usage("ragged rows"));
        }
        Self::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    /// Build a real matrix from row-major data.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::usage(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Self::new(DMatrix::from_fn(rows, cols, |i, j| {
            Complex64::new(data[i * cols + j], 0.0)
        }))
    }

    pub fn identity(n: usize) -> Self {
        ComplexMatrix(DMatrix::identity(n, n))
    }

    pub fn as_mat(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    /// Wrap a matrix produced by arithmetic on already-validated inputs.
    pub(crate) fn wrap(m: CMat) -> Self {
        debug_assert!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        ComplexMatrix(m)
    }
}

impl Deref for ComplexMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

/// A dense complex vector whose entries are all finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct ComplexVector(CVec);

impl ComplexVector {
    pub fn new(v: CVec) -> Result<Self> {
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("vector contains non-finite entries".into()));
        }
        Ok(ComplexVector(v))
    }

    pub fn zeros(n: usize) -> Self {
        ComplexVector(CVec::zeros(n))
    }

    pub fn from_slice(v: &[Complex64]) -> Result<Self> {
        Self::new(CVec::from_column_slice(v))
    }

    pub fn as_vec(&self) -> &CVec {
        &self.0
    }

    pub fn into_inner(self) -> CVec {
        self.0
    }

    pub(crate) fn wrap(v: CVec) -> Self {
        ComplexVector(v)
    }
}

impl Deref for ComplexVector {
    type Target = CVec;
    fn deref(&self) -> &CVec {
        &self.0
    }
}

impl TryFrom<Vec<[f64; 2]>> for ComplexVector {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(CVec::from_iterator(
            v.len(),
            v.iter().map(|[re, im]| Complex64::new(*re, *im)),
        ))
    }
}

impl From<ComplexVector> for Vec<[f64; 2]> {
    fn from(v: ComplexVector) -> Self {
        v.0.iter().map(|z| [z.re, z.im]).collect()
    }
}

fn ensure_nonempty(m: &CMat) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        Err(Error::usage("operator norm of an empty matrix"))
    } else {
        Ok(())
    }
}

/// `‖M‖_{∞→∞}`: the largest row ℓ1 norm.
pub fn norm_inf_inf(m: &CMat) -> Result<f64> {
    ensure_nonempty(m)?;
    Ok(m.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// `‖M‖_{1→1}`: the largest column ℓ1 norm, i.e. `‖M*‖_{∞→∞}`.
pub fn norm_one_one(m: &CMat) -> Result<f64> {
    ensure_nonempty(m)?;
    Ok(m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Singular values in decreasing order.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    ensure_nonempty(m)?;
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numeric("singular value decomposition did not converge".into()))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// `‖M‖_{2→2}`: the largest singular value.
pub fn norm_two_two(m: &CMat) -> Result<f64> {
    Ok(singular_values(m)?[0])
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn min_singular(m: &CMat) -> Result<f64> {
    Ok(*singular_values(m)?.last().expect("nonempty"))
}

/// `(A*A)⁻¹ = V Σ⁻² V*` from the SVD of a square `A`, avoiding the squared
/// condition number of forming `A*A` first. Fails like [`hermitian_inverse`]
/// when `σ_min(A) ≤ SIGMA_TOL_REL · σ_max(A)`.
pub fn gram_inverse_of(a: &CMat) -> Result<CMat> {
    ensure_nonempty(a)?;
    if a.nrows() != a.ncols() {
        return Err(Error::usage(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = SVD::try_new(a.clone(), false, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numeric("singular value decomposition did not converge".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let tol = SIGMA_TOL_REL * smax;
    if smin <= tol {
        return Err(Error::singular(smin, tol));
    }
    let v_t = svd.v_t.expect("requested V*");
    let mut scaled = v_t.adjoint();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= Complex64::new(sv[j] * sv[j], 0.0);
    }
    let x = scaled * v_t;
    Ok((&x + x.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Inverse of a Hermitian matrix whose smallest singular value exceeds
/// `SIGMA_TOL_REL · ‖M‖_{2→2}`.
pub fn hermitian_inverse(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::usage(format!(
            "hermitian_inverse needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    ensure_nonempty(m)?;
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let asym = (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::usage(format!(
            "matrix is not Hermitian (max |M - M*| = {asym:e})"
        )));
    }
    let sv = singular_values(m)?;
    let (smax, smin) = (sv[0], sv[n - 1]);
    let tol = SIGMA_TOL_REL * smax;
    if smin <= tol {
        return Err(Error::singular(smin, tol));
    }
    let mut inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::singular(smin, tol))?;
    // one step of iterative refinement
    let eye = CMat::identity(n, n);
    let resid = &eye - m * &inv;
    inv += &inv * resid;
    let herm = (&inv + inv.adjoint()).scale(0.5);
    ComplexMatrix::new(herm).map(ComplexMatrix::into_inner)
}

/// Solve a square system `M u = b` by LU, rejecting numerically singular `M`.
pub fn solve_square(m: &CMat, b: &CMat) -> Result<CMat> {
    let sv = singular_values(m)?;
    let tol = SIGMA_TOL_REL * sv[0];
    let smin = *sv.last().unwrap();
    if m.nrows() != m.ncols() || smin <= tol {
        return Err(Error::singular(smin, tol));
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::singular(smin, tol))
}

/// Keep the listed columns, in the given order.
pub fn select_columns(m: &CMat, cols: &[usize]) -> CMat {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Keep the listed rows, in the given order.
pub fn select_rows(m: &CMat, rows: &[usize]) -> CMat {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn l1_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

pub fn linf_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
