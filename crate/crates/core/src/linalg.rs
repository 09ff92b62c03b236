//! Symmetric-eigenvalue helpers used throughout the filter, smoother, and
//! residual code: pseudo-inverses, PSD square roots, and tolerance checks.
//!
//! Every covariance that reaches these routines is symmetrized first, so the
//! eigendecompositions operate on exactly symmetric input. Functions return a
//! `String` describing the failure; callers attach the time step and
//! operation name.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue cutoff below which a pseudo-inverse treats an
/// eigenvalue as a structural zero.
pub const PINV_RTOL: f64 = 1e-12;

/// Relative magnitude below which a negative eigenvalue is clipped to zero;
/// anything more negative is rejected as an invalid covariance.
pub const NEG_EIG_RTOL: f64 = 1e-9;

/// Relative tolerance for symmetry checks.
pub const SYM_RTOL: f64 = 1e-12;

/// Validation bound: eigenvalues must satisfy
/// `lambda >= -PSD_EIG_RTOL * max(1, lambda_max)`.
pub const PSD_EIG_RTOL: f64 = 1e-10;

/// `(a + a^T) / 2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Largest absolute entry; 0 for empty matrices.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of the symmetrized input: `(eigenvalues, eigenvectors)`
/// with eigenvectors in columns.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = sym(a).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// `(lambda_min, lambda_max)` of the symmetrized input; `(0, 0)` for empty.
pub fn eig_bounds(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let (vals, _) = sym_eigen(a);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn spectral_map(
    a: &DMatrix<f64>,
    f: impl Fn(f64, f64) -> std::result::Result<f64, String>,
) -> std::result::Result<DMatrix<f64>, String> {
    let k = a.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (vals, vecs) = sym_eigen(a);
    let lambda_max = vals.iter().cloned().fold(0.0f64, f64::max);
    let mut mapped = DVector::zeros(k);
    for i in 0..k {
        mapped[i] = f(vals[i], lambda_max)?;
    }
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        if mapped[i] != 0.0 {
            let col = vecs.column(i);
            // out += mapped_i * q_i q_i^T
            for r in 0..k {
                for c in 0..k {
                    out[(r, c)] += mapped[i] * col[r] * col[c];
                }
            }
        }
    }
    Ok(sym(&out))
}

/// Eigenvalue-truncated pseudo-inverse of a symmetric PSD matrix.
///
/// Eigenvalues at or below `PINV_RTOL * lambda_max` (including any small
/// negatives) are treated as zero. Never fails: an all-zero matrix maps to an
/// all-zero inverse.
pub fn pinv_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |lambda, lambda_max| {
        if lambda_max <= 0.0 || lambda <= PINV_RTOL * lambda_max {
            Ok(0.0)
        } else {
            Ok(1.0 / lambda)
        }
    })
    .expect("pinv_psd cannot fail")
}

/// Symmetric pseudo-inverse square root `A^{-1/2}` of a PSD matrix.
///
/// Zero eigenvalues (below `PINV_RTOL * lambda_max`) are dropped; negatives
/// within `NEG_EIG_RTOL * lambda_max` are clipped to zero; anything more
/// negative is an error.
pub fn pinv_sqrt_psd(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
    spectral_map(a, |lambda, lambda_max| {
        if lambda < -NEG_EIG_RTOL * lambda_max.max(1.0) {
            Err(format!(
                "eigenvalue {lambda:e} below negativity tolerance; covariance is not PSD"
            ))
        } else if lambda_max <= 0.0 || lambda <= PINV_RTOL * lambda_max {
            Ok(0.0)
        } else {
            Ok(1.0 / lambda.sqrt())
        }
    })
}

/// Symmetric PSD square root `A^{1/2}`, clipping round-off negatives to zero.
///
/// Fails for eigenvalues below `-NEG_EIG_RTOL * max(1, lambda_max)`: the
/// matrix is genuinely indefinite, not noisy.
pub fn sqrt_psd(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
    spectral_map(a, |lambda, lambda_max| {
        if lambda < -NEG_EIG_RTOL * lambda_max.max(1.0) {
            Err(format!(
                "eigenvalue {lambda:e} below negativity tolerance; cannot factor covariance"
            ))
        } else if lambda <= 0.0 {
            Ok(0.0)
        } else {
            Ok(lambda.sqrt())
        }
    })
}

/// Extract the `rows x cols` submatrix selected by index lists.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Scatter `small` into an `nrows x ncols` zero matrix at the given indices.
pub fn embed(
    small: &DMatrix<f64>,
    rows: &[usize],
    cols: &[usize],
    nrows: usize,
    ncols: usize,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(nrows, ncols);
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out[(r, c)] = small[(i, j)];
        }
    }
    out
}
