//! Smoothed (conditional) residuals and the exact covariance of their joint
//! distribution, in both stacking conventions, plus standardization and
//! outlier flagging.
//!
//! The model residual at t is `vhat_t = E[Y_t|data] - Z_t xhat_t - a_t` and
//! the state residual is `what_t = xhat_t - B_t xhat_{t-1} - u_t`. Because
//! the smoothed state is itself a function of the data, these residuals are
//! correlated across the model/state split; the covariance blocks here give
//! their joint law over repeated sampling of the data, which is what
//! standardized-residual outlier screening needs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::SmootherOutput;
use crate::linalg;
use crate::model::{ModelSpec, ObservationSet};
use crate::ymoments::ConditionalYMoments;

/// How the per-time residual vector is stacked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// `(vhat_t, what_t)`: model and state residual at the same time.
    Contemporaneous,
    /// `(vhat_t, what_{t+1})`: the pairing produced by the backward
    /// disturbance-smoother recursion. At t = T the state block is absent.
    Harvey,
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Convention::Contemporaneous => write!(f, "contemporaneous"),
            Convention::Harvey => write!(f, "harvey"),
        }
    }
}

/// How residuals are standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdMode {
    /// Multiply by the symmetric pseudo-inverse square root of the joint
    /// covariance (Cholesky-free, tolerates structural zeros).
    Full,
    /// Divide each component by the square root of its own variance.
    Marginal,
}

impl std::fmt::Display for StdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StdMode::Full => write!(f, "full"),
            StdMode::Marginal => write!(f, "marginal"),
        }
    }
}

/// Standardized residual vectors with a per-component validity mask.
///
/// `defined[t-1][i] == false` marks structural zeros: components whose
/// variance is exactly zero (degenerate directions, zeroed missing rows in
/// the lagged-parity convention, or the absent state block at t = T).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<DVector<f64>>,
    pub defined: Vec<Vec<bool>>,
}

/// `Var[Vhat_t] = R_t - Z_t Vhat_t Z_t^T + S_t Z_t^T + Z_t S_t^T`,
/// symmetrized.
///
/// Reduces to `R - Z Vhat Z^T` when t is fully observed (the S terms vanish)
/// and to `R + Z Vhat Z^T` when t is fully missing (S = Z Vhat).
pub fn model_residual_variance(
    spec: &ModelSpec,
    sm: &SmootherOutput,
    ym: &ConditionalYMoments,
    t: usize,
) -> DMatrix<f64> {
    let z = spec.z_at(t);
    let s = &ym.s[t - 1];
    let raw = spec.r_at(t) - z * &sm.vsmooth[t] * z.transpose()
        + s * z.transpose()
        + z * s.transpose();
    linalg::sym(&raw)
}

/// `Var[What_t] = Q_t - Vhat_t - B_t Vhat_{t-1} B_t^T + Vhat_{t,t-1} B_t^T
/// + B_t Vhat_{t-1,t}`, symmetrized. Needs the smoothed t = 0 moments at
/// t = 1.
pub fn state_residual_variance(spec: &ModelSpec, sm: &SmootherOutput, t: usize) -> DMatrix<f64> {
    let b = spec.b_at(t);
    let lag = &sm.vlag[t - 1];
    let raw = spec.q_at(t) - &sm.vsmooth[t] - b * &sm.vsmooth[t - 1] * b.transpose()
        + lag * b.transpose()
        + b * lag.transpose();
    linalg::sym(&raw)
}

/// `Cov[Vhat_t, What_t] = -S_t + S_{t,t-1} B_t^T - Z_t Vhat_{t,t-1} B_t^T
/// + Z_t Vhat_t`.
pub fn cov_v_w_same(
    spec: &ModelSpec,
    sm: &SmootherOutput,
    ym: &ConditionalYMoments,
    t: usize,
) -> DMatrix<f64> {
    let z = spec.z_at(t);
    let b = spec.b_at(t);
    -&ym.s[t - 1] + &ym.s_prev[t - 1] * b.transpose() - z * &sm.vlag[t - 1] * b.transpose()
        + z * &sm.vsmooth[t]
}

/// `Cov[Vhat_t, What_{t+1}] = -S_{t,t+1} + S_t B_{t+1}^T + Z_t Vhat_{t,t+1}
/// - Z_t Vhat_t B_{t+1}^T`, defined for t = 1..T-1.
pub fn cov_v_w_next(
    spec: &ModelSpec,
    sm: &SmootherOutput,
    ym: &ConditionalYMoments,
    t: usize,
) -> DMatrix<f64> {
    assert!(t < spec.horizon, "cov_v_w_next is undefined at t = T");
    let z = spec.z_at(t);
    let b_next = spec.b_at(t + 1);
    -&ym.s_next[t - 1] + &ym.s[t - 1] * b_next.transpose() + z * sm.vlag_next(t)
        - z * &sm.vsmooth[t] * b_next.transpose()
}

/// Assemble the per-time joint covariance of the stacked residual vector.
///
/// Contemporaneous: `[[Var v_t, Cov(v_t, w_t)], [., Var w_t]]` for t = 1..T.
/// Harvey: `[[Var v_t, Cov(v_t, w_{t+1})], [., Var w_{t+1}]]` for t = 1..T-1;
/// at t = T the state and cross blocks are zero-filled (the smoothed state
/// residual beyond the sample has zero conditional-mean variance).
pub fn joint_residual_covariance(
    spec: &ModelSpec,
    sm: &SmootherOutput,
    ym: &ConditionalYMoments,
    convention: Convention,
) -> Vec<DMatrix<f64>> {
    let (m, n, horizon) = (spec.num_states, spec.num_obs, spec.horizon);
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let var_v = model_residual_variance(spec, sm, ym, t);
        let (cross, var_w) = match convention {
            Convention::Contemporaneous => (
                cov_v_w_same(spec, sm, ym, t),
                state_residual_variance(spec, sm, t),
            ),
            Convention::Harvey => {
                if t < horizon {
                    (
                        cov_v_w_next(spec, sm, ym, t),
                        state_residual_variance(spec, sm, t + 1),
                    )
                } else {
                    (DMatrix::zeros(n, m), DMatrix::zeros(m, m))
                }
            }
        };
        let mut sigma = DMatrix::zeros(n + m, n + m);
        sigma.view_mut((0, 0), (n, n)).copy_from(&var_v);
        sigma.view_mut((0, n), (n, m)).copy_from(&cross);
        sigma.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
        sigma.view_mut((n, n), (m, m)).copy_from(&var_w);
        out.push(linalg::sym(&sigma));
    }
    out
}

/// Residual values: `vhat` uses E[Y_t|data] so unobserved rows carry the
/// zero-mean residual of the conditional expectation, and `what` spans
/// t = 1..T using the smoothed t = 0 state.
pub fn residuals(
    spec: &ModelSpec,
    sm: &SmootherOutput,
    ym: &ConditionalYMoments,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n, horizon) = (spec.num_states, spec.num_obs, spec.horizon);
    let mut v = DMatrix::zeros(n, horizon);
    let mut w = DMatrix::zeros(m, horizon);
    for t in 1..=horizon {
        let vt = ym.yexp.column(t - 1) - spec.z_at(t) * &sm.xsmooth[t] - spec.a_at(t);
        let wt = &sm.xsmooth[t] - spec.b_at(t) * &sm.xsmooth[t - 1] - spec.u_at(t);
        v.set_column(t - 1, &vt);
        w.set_column(t - 1, &wt);
    }
    (v, w)
}

/// Standardize stacked residual vectors against their per-time covariance.
///
/// `Full` mode applies the symmetric pseudo-inverse square root of the whole
/// matrix; `Marginal` divides by per-component standard deviations.
/// Components with exactly zero variance produce 0 and are marked undefined.
pub fn standardize(
    sigmas: &[DMatrix<f64>],
    eps: &[DVector<f64>],
    mode: StdMode,
) -> Result<Standardized> {
    if sigmas.len() != eps.len() {
        return Err(Error::Dimension(format!(
            "{} covariance matrices for {} residual vectors",
            sigmas.len(),
            eps.len()
        )));
    }
    let mut values = Vec::with_capacity(eps.len());
    let mut defined = Vec::with_capacity(eps.len());
    for (idx, (sigma, e)) in sigmas.iter().zip(eps.iter()).enumerate() {
        let t = idx + 1;
        let def: Vec<bool> = (0..e.len()).map(|i| sigma[(i, i)] > 0.0).collect();
        let z = match mode {
            StdMode::Full => {
                let root = linalg::pinv_sqrt_psd(sigma).map_err(|detail| Error::Numerical {
                    t,
                    op: "standardize",
                    detail,
                })?;
                root * e
            }
            StdMode::Marginal => DVector::from_fn(e.len(), |i, _| {
                let var = sigma[(i, i)];
                if var > 0.0 {
                    e[i] / var.sqrt()
                } else if var >= -linalg::NEG_EIG_RTOL {
                    0.0
                } else {
                    f64::NAN
                }
            }),
        };
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical {
                t,
                op: "standardize",
                detail: "negative variance on the diagonal of the residual covariance".to_string(),
            });
        }
        values.push(z);
        defined.push(def);
    }
    Ok(Standardized { values, defined })
}

/// `|z| > threshold` per component; undefined components are never flagged.
pub fn flag_outliers(std: &Standardized, threshold: f64) -> Result<Vec<Vec<bool>>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "outlier threshold must be positive, got {threshold}"
        )));
    }
    Ok(std
        .values
        .iter()
        .zip(std.defined.iter())
        .map(|(z, def)| {
            (0..z.len())
                .map(|i| def[i] && z[i].abs() > threshold)
                .collect()
        })
        .collect())
}

/// Everything the residual pipeline produces for one model/data pair.
///
/// Per-time sequences index t = 1..T at t-1. `sigma_harvey[T-1]` carries only
/// its model block (state and cross blocks are zero-filled and marked absent
/// in the standardized output). The `outlier` flags are computed from the
/// standardization selected by `convention`/`std_mode`.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub var_v: Vec<DMatrix<f64>>,
    pub var_w: Vec<DMatrix<f64>>,
    pub cov_vw_same: Vec<DMatrix<f64>>,
    pub cov_vw_next: Vec<DMatrix<f64>>,
    pub sigma_contemp: Vec<DMatrix<f64>>,
    pub sigma_harvey: Vec<DMatrix<f64>>,
    pub std_contemp: Standardized,
    pub std_harvey: Standardized,
    pub outlier: Vec<Vec<bool>>,
    pub convention: Convention,
    pub std_mode: StdMode,
    pub threshold: f64,
}

impl ResidualReport {
    /// Assemble the full report.
    ///
    /// The contemporaneous standardization keeps the expectation-based
    /// residuals on unobserved rows (their variance blocks cover them); the
    /// lagged-convention standardization zeroes unobserved rows of both the
    /// residual and its covariance first, matching the backward-recursion
    /// output.
    pub fn compute(
        spec: &ModelSpec,
        obs: &ObservationSet,
        sm: &SmootherOutput,
        ym: &ConditionalYMoments,
        convention: Convention,
        std_mode: StdMode,
        threshold: f64,
    ) -> Result<ResidualReport> {
        let (m, n, horizon) = (spec.num_states, spec.num_obs, spec.horizon);
        let (v, w) = residuals(spec, sm, ym);

        let var_v: Vec<_> = (1..=horizon)
            .map(|t| model_residual_variance(spec, sm, ym, t))
            .collect();
        let var_w: Vec<_> = (1..=horizon)
            .map(|t| state_residual_variance(spec, sm, t))
            .collect();
        let cov_same: Vec<_> = (1..=horizon).map(|t| cov_v_w_same(spec, sm, ym, t)).collect();
        let cov_next: Vec<_> = (1..horizon).map(|t| cov_v_w_next(spec, sm, ym, t)).collect();
        let sigma_contemp = joint_residual_covariance(spec, sm, ym, Convention::Contemporaneous);
        let sigma_harvey = joint_residual_covariance(spec, sm, ym, Convention::Harvey);

        let eps_contemp: Vec<DVector<f64>> = (1..=horizon)
            .map(|t| stack(&v.column(t - 1).into_owned(), &w.column(t - 1).into_owned()))
            .collect();
        let std_contemp = standardize(&sigma_contemp, &eps_contemp, std_mode)?;

        // Lagged-parity inputs: zero unobserved model-residual rows in both
        // the vector and the covariance; pair with the next state residual.
        let mut eps_harvey = Vec::with_capacity(horizon);
        let mut sigma_harvey_star = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let missing = obs.missing_rows(t);
            let mut e = DVector::zeros(n + m);
            for i in 0..n {
                if !missing.contains(&i) {
                    e[i] = v[(i, t - 1)];
                }
            }
            if t < horizon {
                for j in 0..m {
                    e[n + j] = w[(j, t)];
                }
            }
            let mut sig = sigma_harvey[t - 1].clone();
            for &row in &missing {
                sig.row_mut(row).fill(0.0);
                sig.column_mut(row).fill(0.0);
            }
            eps_harvey.push(e);
            sigma_harvey_star.push(sig);
        }
        let mut std_harvey = standardize(&sigma_harvey_star, &eps_harvey, std_mode)?;
        // The t = T state block does not exist in this convention.
        for j in 0..m {
            std_harvey.defined[horizon - 1][n + j] = false;
        }

        let outlier = match convention {
            Convention::Contemporaneous => flag_outliers(&std_contemp, threshold)?,
            Convention::Harvey => flag_outliers(&std_harvey, threshold)?,
        };

        Ok(ResidualReport {
            v,
            w,
            var_v,
            var_w,
            cov_vw_same: cov_same,
            cov_vw_next: cov_next,
            sigma_contemp,
            sigma_harvey,
            std_contemp,
            std_harvey,
            outlier,
            convention,
            std_mode,
            threshold,
        })
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}
