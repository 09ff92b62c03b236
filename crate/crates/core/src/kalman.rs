//! Kalman filter, fixed-interval (RTS) smoother, and lag-one covariance
//! smoother, all with missing-data modifications.
//!
//! Missing observations are handled by zeroing: rows of Z_t for missing rows
//! of y_t are set to zero, rows *and* columns of R_t (including the diagonal)
//! likewise, and the innovation covariance F_t is inverted on its observed
//! sub-block only, with zeros embedded elsewhere. A fully missing time step
//! therefore reduces to a pure prediction step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ModelSpec, ObservationSet};

/// Forward-pass output.
///
/// Sequences over t = 1..T are stored at index t-1; the filtered state runs
/// over t = 0..T with index t (entry 0 is the initial state, untouched by
/// data). `f` holds the missing-modified innovation covariance and `finv`
/// its modified inverse (zero outside the observed sub-block).
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub xpred: Vec<DVector<f64>>,
    pub vpred: Vec<DMatrix<f64>>,
    pub xfilt: Vec<DVector<f64>>,
    pub vfilt: Vec<DMatrix<f64>>,
    pub f: Vec<DMatrix<f64>>,
    pub finv: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    /// Innovations, n x T; rows at unobserved cells are exactly 0.
    pub innov: DMatrix<f64>,
    pub loglik: f64,
}

/// Smoothed state moments given all observed data.
///
/// `xsmooth`/`vsmooth` run over t = 0..T (index t); `vlag[t-1]` holds the
/// lag-one covariance Cov(X_t, X_{t-1} | data) for t = 1..T.
#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub xsmooth: Vec<DVector<f64>>,
    pub vsmooth: Vec<DMatrix<f64>>,
    pub vlag: Vec<DMatrix<f64>>,
}

impl SmootherOutput {
    /// Cov(X_t, X_{t+1} | data) for t = 0..T-1, the transpose of the stored
    /// lag-one covariance at t+1.
    pub fn vlag_next(&self, t: usize) -> DMatrix<f64> {
        self.vlag[t].transpose()
    }
}

/// Zero the rows of `z` listed in `missing`.
pub(crate) fn z_star(z: &DMatrix<f64>, missing: &[usize]) -> DMatrix<f64> {
    let mut out = z.clone();
    for &row in missing {
        out.row_mut(row).fill(0.0);
    }
    out
}

/// Zero the rows and columns of `r` listed in `missing`, diagonal included.
pub(crate) fn r_star(r: &DMatrix<f64>, missing: &[usize]) -> DMatrix<f64> {
    let mut out = r.clone();
    for &row in missing {
        out.row_mut(row).fill(0.0);
        out.column_mut(row).fill(0.0);
    }
    out
}

/// Modified inverse of the innovation covariance: invert the observed
/// sub-block, embed it back, zero elsewhere. Also returns the log-determinant
/// of the observed sub-block for the likelihood.
///
/// A numerically singular observed sub-block is an error naming `t`.
pub(crate) fn modified_f_inverse(
    f: &DMatrix<f64>,
    observed: &[usize],
    t: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let n = f.nrows();
    if observed.is_empty() {
        return Ok((DMatrix::zeros(n, n), 0.0));
    }
    let foo = linalg::submatrix(f, observed, observed);
    let (vals, vecs) = linalg::sym_eigen(&foo);
    let lambda_max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if lambda_max <= 0.0 || lambda_min <= linalg::PINV_RTOL * lambda_max {
        return Err(Error::Numerical {
            t,
            op: "filter: innovation covariance",
            detail: format!(
                "observed sub-block numerically singular (eigenvalues in [{lambda_min:.3e}, {lambda_max:.3e}])"
            ),
        });
    }
    let k = observed.len();
    let mut inv = DMatrix::zeros(k, k);
    let mut logdet = 0.0;
    for i in 0..k {
        logdet += vals[i].ln();
        let col = vecs.column(i);
        for r in 0..k {
            for c in 0..k {
                inv[(r, c)] += col[r] * col[c] / vals[i];
            }
        }
    }
    Ok((linalg::embed(&linalg::sym(&inv), observed, observed, n, n), logdet))
}

/// Forward filtering pass over the observation set.
pub fn filter(spec: &ModelSpec, obs: &ObservationSet) -> Result<FilterOutput> {
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

    let mut out = FilterOutput {
        xpred: Vec::with_capacity(horizon),
        vpred: Vec::with_capacity(horizon),
        xfilt: Vec::with_capacity(horizon + 1),
        vfilt: Vec::with_capacity(horizon + 1),
        f: Vec::with_capacity(horizon),
        finv: Vec::with_capacity(horizon),
        k: Vec::with_capacity(horizon),
        innov: DMatrix::zeros(n, horizon),
        loglik: 0.0,
    };

    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let eye = DMatrix::<f64>::identity(m, m);

    let mut x = spec.xi.clone();
    let mut v = linalg::sym(&spec.lambda);
    out.xfilt.push(x.clone());
    out.vfilt.push(v.clone());

    for t in 1..=horizon {
        let xp = spec.b_at(t) * &x + spec.u_at(t);
        let vp = linalg::sym(&(spec.b_at(t) * &v * spec.b_at(t).transpose() + spec.q_at(t)));

        let missing = obs.missing_rows(t);
        let observed = obs.observed_rows(t);
        let zs = z_star(spec.z_at(t), &missing);
        let rs = r_star(spec.r_at(t), &missing);

        // Innovation with missing entries zeroed.
        let mut innov_t = obs.y_col(t) - &zs * &xp - spec.a_at(t);
        for &row in &missing {
            innov_t[row] = 0.0;
        }

        let f_t = linalg::sym(&(&zs * &vp * zs.transpose() + &rs));
        let (finv_t, logdet) = modified_f_inverse(&f_t, &observed, t)?;
        let gain = &vp * zs.transpose() * &finv_t;

        x = &xp + &gain * &innov_t;
        // Joseph-form update for symmetry and PSD stability.
        let i_kz = &eye - &gain * &zs;
        v = linalg::sym(&(&i_kz * &vp * i_kz.transpose() + &gain * &rs * gain.transpose()));

        if !observed.is_empty() {
            let quad = innov_t.dot(&(&finv_t * &innov_t));
            out.loglik += -0.5 * (observed.len() as f64 * ln_2pi + logdet + quad);
        }

        out.innov.set_column(t - 1, &innov_t);
        out.xpred.push(xp);
        out.vpred.push(vp);
        out.xfilt.push(x.clone());
        out.vfilt.push(v.clone());
        out.f.push(f_t);
        out.finv.push(finv_t);
        out.k.push(gain);
    }
    Ok(out)
}

/// Backward RTS pass over an existing filter output.
///
/// The pass extends to t = 0 (the smoothed initial state is needed by the
/// t = 1 state residual). The smoother gain uses an eigenvalue-truncated
/// pseudo-inverse of the predicted covariance so that deterministic states
/// (Q = 0, singular Lambda) work.
pub fn smooth_filtered(
    spec: &ModelSpec,
    obs: &ObservationSet,
    filt: &FilterOutput,
) -> Result<SmootherOutput> {
    let horizon = spec.horizon;
    let mut xs = filt.xfilt.clone();
    let mut vs = filt.vfilt.clone();
    let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);

    // J_t = V_t^t B_{t+1}^T (V_{t+1}^t)^+ for t = 0..T-1.
    for t in 0..horizon {
        let b_next = spec.b_at(t + 1);
        gains.push(&filt.vfilt[t] * b_next.transpose() * linalg::pinv_psd(&filt.vpred[t]));
    }
    for t in (0..horizon).rev() {
        let j = &gains[t];
        let dx = &xs[t + 1] - &filt.xpred[t];
        let dv = &vs[t + 1] - &filt.vpred[t];
        xs[t] = &filt.xfilt[t] + j * dx;
        vs[t] = linalg::sym(&(&filt.vfilt[t] + j * dv * j.transpose()));
    }

    // Lag-one covariance smoother, initialized at t = T with
    // (I - K_T Z*_T) B_T V_{T-1}^{T-1}.
    let m = spec.num_states;
    let eye = DMatrix::<f64>::identity(m, m);
    let mut vlag = vec![DMatrix::zeros(m, m); horizon];
    let zs_last = z_star(spec.z_at(horizon), &obs.missing_rows(horizon));
    vlag[horizon - 1] =
        (&eye - &filt.k[horizon - 1] * zs_last) * spec.b_at(horizon) * &filt.vfilt[horizon - 1];
    for t in (1..horizon).rev() {
        // Cov(X_t, X_{t-1} | data), reading Cov(X_{t+1}, X_t | data) from the
        // entry filled on the previous iteration.
        let j_prev = &gains[t - 1];
        let j_t = &gains[t];
        vlag[t - 1] = &filt.vfilt[t] * j_prev.transpose()
            + j_t * (&vlag[t] - spec.b_at(t + 1) * &filt.vfilt[t]) * j_prev.transpose();
    }

    Ok(SmootherOutput {
        xsmooth: xs,
        vsmooth: vs,
        vlag,
    })
}

/// Filter then smooth in one call.
pub fn smooth(spec: &ModelSpec, obs: &ObservationSet) -> Result<SmootherOutput> {
    let filt = filter(spec, obs)?;
    smooth_filtered(spec, obs, &filt)
}

/// Innovations standardized by the symmetric pseudo-inverse square root of
/// the (missing-modified) innovation covariance; missing rows stay 0.
pub fn standardized_innovations(filt: &FilterOutput) -> Result<DMatrix<f64>> {
    let n = filt.innov.nrows();
    let horizon = filt.innov.ncols();
    let mut out = DMatrix::zeros(n, horizon);
    for t in 1..=horizon {
        let root = linalg::pinv_sqrt_psd(&filt.f[t - 1]).map_err(|detail| Error::Numerical {
            t,
            op: "standardized innovations",
            detail,
        })?;
        out.set_column(t - 1, &(root * filt.innov.column(t - 1)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::apply_mask;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    /// m=n=1, B=Z=1, u=a=0, Q=R=1, xi=0, Lambda=0, T=1.
    fn m0() -> ModelSpec {
        ModelSpec::time_invariant(
            1,
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 0.0),
        )
    }

    fn m0_obs() -> ObservationSet {
        ObservationSet::fully_observed(DMatrix::from_element(1, 1, 2.0))
    }

    #[test]
    fn filter_hand_worked_scalar_case() {
        let filt = filter(&m0(), &m0_obs()).unwrap();
        assert_abs_diff_eq!(filt.xpred[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.vpred[0][(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.f[0][(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.k[0][(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.xfilt[1][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.vfilt[1][(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.innov[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn fully_missing_step_is_prediction_only() {
        let obs = apply_mask(&m0_obs(), &[(1, 1)]).unwrap();
        let filt = filter(&m0(), &obs).unwrap();
        assert_eq!(filt.f[0][(0, 0)], 0.0);
        assert_eq!(filt.innov[(0, 0)], 0.0);
        assert_abs_diff_eq!(filt.xfilt[1][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.vfilt[1][(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(filt.loglik, 0.0);
    }

    #[test]
    fn exact_observation_pins_the_state() {
        // R = 0, Z = I: the filtered state equals the data with zero variance.
        let spec = ModelSpec::time_invariant(
            3,
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 0.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
        );
        let obs = ObservationSet::fully_observed(DMatrix::from_row_slice(1, 3, &[0.5, -1.0, 2.0]));
        let filt = filter(&spec, &obs).unwrap();
        for t in 1..=3 {
            assert_abs_diff_eq!(filt.xfilt[t][0], obs.y[(0, t - 1)], epsilon = 1e-12);
            assert_abs_diff_eq!(filt.vfilt[t][(0, 0)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoother_hand_worked_scalar_case() {
        let spec = m0();
        let obs = m0_obs();
        let sm = smooth(&spec, &obs).unwrap();
        assert_abs_diff_eq!(sm.xsmooth[1][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sm.vsmooth[1][(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sm.xsmooth[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sm.vsmooth[0][(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sm.vlag[0][(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn all_missing_smooths_to_unconditional_moments() {
        // Random walk, everything masked: the smoothed moments are the prior
        // propagation x_t = 0, var = Lambda + t Q.
        let spec = ModelSpec::time_invariant(
            3,
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
        );
        let obs = apply_mask(
            &ObservationSet::fully_observed(DMatrix::from_row_slice(1, 3, &[9.0, 9.0, 9.0])),
            &[(1, 1), (1, 2), (1, 3)],
        )
        .unwrap();
        let sm = smooth(&spec, &obs).unwrap();
        for t in 0..=3 {
            assert_abs_diff_eq!(sm.xsmooth[t][0], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(sm.vsmooth[t][(0, 0)], 1.0 + t as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardized_innovations_scalar_cases() {
        let filt = filter(&m0(), &m0_obs()).unwrap();
        let std = standardized_innovations(&filt).unwrap();
        // innovation 2 with F = 2 standardizes to sqrt(2)
        assert_abs_diff_eq!(std[(0, 0)], 2.0 / 2.0f64.sqrt(), epsilon = 1e-14);

        let obs = apply_mask(&m0_obs(), &[(1, 1)]).unwrap();
        let filt = filter(&m0(), &obs).unwrap();
        let std = standardized_innovations(&filt).unwrap();
        assert_eq!(std[(0, 0)], 0.0);
    }

    #[test]
    fn loglik_matches_direct_gaussian_density() {
        // For M0, y_1 ~ N(0, 2).
        let filt = filter(&m0(), &m0_obs()).unwrap();
        let expect = -0.5 * ((2.0 * std::f64::consts::PI).ln() + 2.0f64.ln() + 4.0 / 2.0);
        assert_abs_diff_eq!(filt.loglik, expect, epsilon = 1e-12);
    }
}
