//! Small dense symmetric-matrix helpers used by the contextual models.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which a design matrix is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Inverse of a symmetric positive definite matrix, refusing singular or
/// ill-conditioned input.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        if v <= 0.0 {
            return Err(Error::UninitializedDesign);
        }
        return Ok(DMatrix::from_element(1, 1, 1.0 / v));
    }
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 {
        return Err(Error::UninitializedDesign);
    }
    if hi / lo > MAX_CONDITION {
        return Err(Error::IllConditioned(hi / lo));
    }
    let chol = m.clone().cholesky().ok_or(Error::UninitializedDesign)?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Result of a symmetric matrix function with negative-eigenvalue clamping.
#[derive(Debug, Clone)]
pub struct SqrtResult {
    pub root: DMatrix<f64>,
    /// Pseudo-inverse of `root` (zero on clamped directions).
    pub inv_root: DMatrix<f64>,
    pub clamped: bool,
}

/// Relative size of a negative eigenvalue that is treated as rounding noise.
const CLAMP_TOL: f64 = 1e-9;

/// Symmetric square root of a positive semidefinite matrix.
///
/// Negative eigenvalues within rounding noise are set to zero and flagged;
/// clearly negative eigenvalues are an error.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<SqrtResult> {
    psd_sqrt_floor(m, 0.0)
}

/// As [`psd_sqrt`], additionally zeroing eigenvalues below `rel_floor` times
/// the largest eigenvalue magnitude (or 1, if larger).
pub fn psd_sqrt_floor(m: &DMatrix<f64>, rel_floor: f64) -> Result<SqrtResult> {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)];
        let scale = v.abs().max(f64::MIN_POSITIVE);
        if v < -CLAMP_TOL * scale.max(1.0) {
            return Err(Error::NotPositiveSemidefinite(v));
        }
        let clamped = v < 0.0;
        let v = if v <= rel_floor * v.abs().max(1.0) { 0.0 } else { v };
        let r = v.max(0.0).sqrt();
        let ir = if r > 0.0 { 1.0 / r } else { 0.0 };
        return Ok(SqrtResult {
            root: DMatrix::from_element(1, 1, r),
            inv_root: DMatrix::from_element(1, 1, ir),
            clamped,
        });
    }
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut clamped = false;
    let mut root_vals = DVector::zeros(n);
    let mut inv_vals = DVector::zeros(n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < 0.0 {
            if lam < -CLAMP_TOL * scale.max(1e-300) && lam < -1e-14 {
                return Err(Error::NotPositiveSemidefinite(lam));
            }
            clamped = true;
            continue;
        }
        if lam <= rel_floor * scale.max(1.0) {
            continue;
        }
        let r = lam.sqrt();
        root_vals[i] = r;
        if lam > 1e-14 * scale {
            inv_vals[i] = 1.0 / r;
        }
    }
    let q = &eig.eigenvectors;
    let mut root = q * DMatrix::from_diagonal(&root_vals) * q.transpose();
    let mut inv_root = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    symmetrize(&mut root);
    symmetrize(&mut inv_root);
    Ok(SqrtResult { root, inv_root, clamped })
}

/// x' m x
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}
