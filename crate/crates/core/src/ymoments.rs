//! Conditional observation moments given the observed data: the expectation
//! of Y_t, its conditional variance, and its cross-covariances with the
//! states at t-1, t, and t+1.
//!
//! Observed rows are pinned by the conditioning, so their entries are exactly
//! zero in every covariance output and the expectation returns the data
//! itself. Missing rows condition through two channels: the smoothed state
//! (via Z) and, when R couples missing to observed rows within a time step,
//! the realized observation noise of the observed rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::SmootherOutput;
use crate::linalg;
use crate::model::{ModelSpec, ObservationSet};

/// Conditional moments of the observations given the observed data.
///
/// Per-time sequences index t = 1..T at t-1. `s_next` has no entry for
/// t = T (there is no state at T+1 inside the sample).
#[derive(Debug, Clone)]
pub struct ConditionalYMoments {
    /// E[Y_t | observed data], n x T; observed rows equal the data exactly.
    pub yexp: DMatrix<f64>,
    /// Var[Y_t | observed data], n x n per t; zero outside the missing block.
    pub u: Vec<DMatrix<f64>>,
    /// Cov[Y_t, X_t | observed data], n x m per t.
    pub s: Vec<DMatrix<f64>>,
    /// Cov[Y_t, X_{t-1} | observed data], n x m per t.
    pub s_prev: Vec<DMatrix<f64>>,
    /// Cov[Y_t, X_{t+1} | observed data], n x m per t = 1..T-1.
    pub s_next: Vec<DMatrix<f64>>,
}

/// Compute the conditional observation moments from smoother output.
///
/// With the per-time partition into observed rows `o` and missing rows `m`,
/// the noise coupling is `C_t = R_mo R_oo^+` and the effective map of the
/// missing rows is `D_t = Z_m - C_t Z_o`; then
///
/// ```text
/// E[Y_m | data]        = Z_m xhat_t + a_m + C_t (y_o - Z_o xhat_t - a_o)
/// Var[Y_m | data]      = R_mm - C_t R_om + D_t Vhat_t D_t^T
/// Cov[Y_m, X_s | data] = D_t Cov(X_t, X_s | data)    for s = t-1, t, t+1
/// ```
///
/// `R_oo` may be singular; its pseudo-inverse is used, but if `R_mo` has mass
/// on null directions of `R_oo` the conditional is ill-posed and an error
/// names the time step.
pub fn conditional_y_moments(
    spec: &ModelSpec,
    obs: &ObservationSet,
    sm: &SmootherOutput,
) -> Result<ConditionalYMoments> {
    spec.check_dims()?;
    let (m, n, horizon) = (spec.num_states, spec.num_obs, spec.horizon);
    if obs.num_series() != n || obs.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "observations are {}x{}, model expects {}x{}",
            obs.num_series(),
            obs.horizon(),
            n,
            horizon
        )));
    }

    let mut out = ConditionalYMoments {
        yexp: DMatrix::zeros(n, horizon),
        u: Vec::with_capacity(horizon),
        s: Vec::with_capacity(horizon),
        s_prev: Vec::with_capacity(horizon),
        s_next: Vec::with_capacity(horizon.saturating_sub(1)),
    };

    for t in 1..=horizon {
        let observed = obs.observed_rows(t);
        let missing = obs.missing_rows(t);
        let xhat = &sm.xsmooth[t];
        let vhat = &sm.vsmooth[t];

        if missing.is_empty() {
            out.yexp.set_column(t - 1, &obs.y_col(t));
            out.u.push(DMatrix::zeros(n, n));
            out.s.push(DMatrix::zeros(n, m));
            out.s_prev.push(DMatrix::zeros(n, m));
            if t < horizon {
                out.s_next.push(DMatrix::zeros(n, m));
            }
            continue;
        }

        let r = spec.r_at(t);
        let z = spec.z_at(t);
        let a = spec.a_at(t);
        let z_m = linalg::submatrix(z, &missing, &(0..m).collect::<Vec<_>>());
        let a_m = DVector::from_fn(missing.len(), |i, _| a[missing[i]]);

        // Noise coupling of missing onto observed rows within the time step.
        let (coupling, noise_var) = if observed.is_empty() {
            (DMatrix::zeros(missing.len(), 0), linalg::submatrix(r, &missing, &missing))
        } else {
            let r_oo = linalg::submatrix(r, &observed, &observed);
            let r_mo = linalg::submatrix(r, &missing, &observed);
            let r_oo_pinv = linalg::pinv_psd(&r_oo);
            // R_mo must lie in the row space of R_oo for the regression of
            // missing noise on observed noise to be well posed.
            let resid = &r_mo - &r_mo * &r_oo_pinv * &r_oo;
            let scale = linalg::max_abs(r).max(1.0);
            if linalg::max_abs(&resid) > 1e-8 * scale {
                return Err(Error::Numerical {
                    t,
                    op: "conditional observation moments",
                    detail: "R couples missing rows to a null direction of the observed block; \
                             the conditional distribution is ill-posed"
                        .to_string(),
                });
            }
            let coupling = &r_mo * &r_oo_pinv;
            let noise = linalg::submatrix(r, &missing, &missing) - &coupling * r_mo.transpose();
            (coupling, noise)
        };

        let z_o = linalg::submatrix(z, &observed, &(0..m).collect::<Vec<_>>());
        let delta = &z_m - &coupling * &z_o;

        // Expectation: observed rows take the data, missing rows regress on
        // the observed innovation at the same time step.
        let mut ycol = DVector::zeros(n);
        for &row in &observed {
            ycol[row] = obs.y[(row, t - 1)];
        }
        let innov_o = DVector::from_fn(observed.len(), |i, _| {
            obs.y[(observed[i], t - 1)]
        }) - &z_o * xhat
            - DVector::from_fn(observed.len(), |i, _| a[observed[i]]);
        let ymiss = &z_m * xhat + &a_m + &coupling * &innov_o;
        for (i, &row) in missing.iter().enumerate() {
            ycol[row] = ymiss[i];
        }
        out.yexp.set_column(t - 1, &ycol);

        let u_block = linalg::sym(&(&noise_var + &delta * vhat * delta.transpose()));
        out.u.push(linalg::embed(&u_block, &missing, &missing, n, n));

        let all_cols: Vec<usize> = (0..m).collect();
        let s_block = &delta * vhat;
        out.s.push(linalg::embed(&s_block, &missing, &all_cols, n, m));
        let s_prev_block = &delta * &sm.vlag[t - 1];
        out.s_prev.push(linalg::embed(&s_prev_block, &missing, &all_cols, n, m));
        if t < horizon {
            let s_next_block = &delta * sm.vlag_next(t);
            out.s_next.push(linalg::embed(&s_next_block, &missing, &all_cols, n, m));
        }
    }
    Ok(out)
}
