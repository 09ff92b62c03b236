//! Backward disturbance-smoother recursion: computes the stacked residual
//! `(vhat_t, what_{t+1})` and its covariance in a single sweep over the
//! filter output, with missing-data modifications.
//!
//! Starting from r_T = 0 and N_T = 0 and working backwards,
//!
//! ```text
//! u_t     = Finv_t innov_t - K_t^T r_t          K_t = B_{t+1} KalmanGain_t
//! r_{t-1} = Z*_t^T u_t + B_{t+1}^T r_t          L_t = B_{t+1} - K_t Z*_t
//! N_{t-1} = Z*_t^T Finv_t Z*_t + L_t^T N_t L_t
//! eps*_t  = R*_t^T u_t + Q*_{t+1}^T r_t
//! Sigma*_t = R*_t^T Finv_t R*_t + J_t^T N_t J_t  J_t = Q*_{t+1} - K_t R*_t
//! ```
//!
//! where `R*_t = [Rstar_t | 0]` (n x (n+m)) and `Q*_{t+1} = [0 | Q_{t+1}]`
//! (m x (n+m)), ordered so the stacked residual puts the model block first.
//! Z*, R*, and Finv are the missing-modified quantities from the filter, so
//! rows (and rows/columns) belonging to unobserved cells come out exactly
//! zero. At t = T the state block is identically zero and reported absent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::{r_star, z_star, FilterOutput};
use crate::linalg;
use crate::model::{ModelSpec, ObservationSet};
use crate::smoothations::{standardize, Standardized, StdMode};

/// Output of the backward recursion.
///
/// `eps[t-1]` stacks the model residual at t over the state residual at t+1;
/// `sigma[t-1]` is its covariance. The recursion trajectories `r` and
/// `n_mat` are kept (index t = 0..T) so their invariants can be audited:
/// r_T = 0, N_T = 0, and every N_t is symmetric PSD.
#[derive(Debug, Clone)]
pub struct HarveyResidualOutput {
    pub eps: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub r: Vec<DVector<f64>>,
    pub n_mat: Vec<DMatrix<f64>>,
}

/// Run the backward recursion over an existing filter output.
///
/// The filter must have been run on the same spec and observations; its
/// missing-value modifications are what make the zero structure of the
/// output exact.
pub fn harvey_backward(
    spec: &ModelSpec,
    obs: &ObservationSet,
    filt: &FilterOutput,
) -> Result<HarveyResidualOutput> {
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
    if filt.k.len() != horizon || filt.finv.len() != horizon || filt.innov.ncols() != horizon {
        return Err(Error::Dimension(
            "filter output does not match the model horizon".to_string(),
        ));
    }

    let mut eps = vec![DVector::zeros(n + m); horizon];
    let mut sigma = vec![DMatrix::zeros(n + m, n + m); horizon];
    let mut r_track = vec![DVector::zeros(m); horizon + 1];
    let mut n_track = vec![DMatrix::zeros(m, m); horizon + 1];

    let mut r = DVector::<f64>::zeros(m);
    let mut n_mat = DMatrix::<f64>::zeros(m, m);

    for t in (1..=horizon).rev() {
        // Beyond the sample the transition is unused; default to the last one.
        let b_next = if t < horizon { spec.b_at(t + 1) } else { spec.b_at(horizon) };
        let q_next = if t < horizon { spec.q_at(t + 1) } else { spec.q_at(horizon) };

        let missing = obs.missing_rows(t);
        let zs = z_star(spec.z_at(t), &missing);
        let rs = r_star(spec.r_at(t), &missing);
        let finv = &filt.finv[t - 1];
        let innov = filt.innov.column(t - 1).into_owned();

        let gain_scaled = b_next * &filt.k[t - 1];
        let u = finv * &innov - gain_scaled.transpose() * &r;

        // R*_t = [rs | 0], Q*_{t+1} = [0 | q_next]: eps stacks R* u over Q* r.
        let mut e = DVector::zeros(n + m);
        e.rows_mut(0, n).copy_from(&(&rs * &u));
        if t < horizon {
            e.rows_mut(n, m).copy_from(&(q_next * &r));
        }
        eps[t - 1] = e;

        // Sigma* = R*^T Finv R* + J^T N J with J = [-K R* | Q_{t+1}].
        let j_model = -(&gain_scaled * &rs); // m x n
        let mut sig = DMatrix::zeros(n + m, n + m);
        sig.view_mut((0, 0), (n, n))
            .copy_from(&(rs.transpose() * finv * &rs + j_model.transpose() * &n_mat * &j_model));
        if t < horizon {
            let cross = j_model.transpose() * &n_mat * q_next; // n x m
            sig.view_mut((0, n), (n, m)).copy_from(&cross);
            sig.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
            sig.view_mut((n, n), (m, m))
                .copy_from(&(q_next * &n_mat * q_next));
        }
        sigma[t - 1] = linalg::sym(&sig);

        let l = b_next - &gain_scaled * &zs;
        r = zs.transpose() * &u + b_next.transpose() * &r;
        n_mat = linalg::sym(&(zs.transpose() * finv * &zs + l.transpose() * &n_mat * &l));
        r_track[t - 1] = r.clone();
        n_track[t - 1] = n_mat.clone();
    }

    Ok(HarveyResidualOutput {
        eps,
        sigma,
        r: r_track,
        n_mat: n_track,
    })
}

/// Standardize the recursion output by the symmetric pseudo-inverse square
/// root of each per-time covariance; structurally zero rows stay zero.
pub fn harvey_standardize(out: &HarveyResidualOutput) -> Result<Standardized> {
    standardize(&out.sigma, &out.eps, StdMode::Full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::filter;
    use crate::model::apply_mask;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

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

    #[test]
    fn hand_worked_scalar_recursion() {
        // At t = T = 1: u_1 = Finv innov = 0.5 * 2 = 1; the model block of
        // eps is R u = 1 and of Sigma is R Finv R = 0.5.
        let spec = m0();
        let obs = ObservationSet::fully_observed(DMatrix::from_element(1, 1, 2.0));
        let filt = filter(&spec, &obs).unwrap();
        let out = harvey_backward(&spec, &obs, &filt).unwrap();
        assert_abs_diff_eq!(out.eps[0][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.sigma[0][(0, 0)], 0.5, epsilon = 1e-15);
        // State block is absent at t = T.
        assert_eq!(out.eps[0][1], 0.0);
        assert_eq!(out.sigma[0][(1, 1)], 0.0);
    }

    #[test]
    fn scalar_standardization() {
        let spec = m0();
        let obs = ObservationSet::fully_observed(DMatrix::from_element(1, 1, 2.0));
        let filt = filter(&spec, &obs).unwrap();
        let out = harvey_backward(&spec, &obs, &filt).unwrap();
        let std = harvey_standardize(&out).unwrap();
        assert_abs_diff_eq!(std.values[0][0], 2.0f64.sqrt(), epsilon = 1e-13);
        assert_eq!(std.values[0][1], 0.0);
        assert!(!std.defined[0][1]);
    }

    #[test]
    fn missing_rows_are_structurally_zero() {
        let spec = ModelSpec::time_invariant(
            4,
            DMatrix::from_element(1, 1, 0.9),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_row_slice(2, 1, &[1.0, -0.5]),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
        );
        let y = DMatrix::from_fn(2, 4, |i, j| (i + 2 * j) as f64 * 0.3 - 1.0);
        let obs = apply_mask(&ObservationSet::fully_observed(y), &[(1, 2), (2, 3)]).unwrap();
        let filt = filter(&spec, &obs).unwrap();
        let out = harvey_backward(&spec, &obs, &filt).unwrap();
        // Row 0 missing at t=2, row 1 missing at t=3.
        assert_eq!(out.eps[1][0], 0.0);
        assert_eq!(out.eps[2][1], 0.0);
        for k in 0..3 {
            assert_eq!(out.sigma[1][(0, k)], 0.0);
            assert_eq!(out.sigma[1][(k, 0)], 0.0);
            assert_eq!(out.sigma[2][(1, k)], 0.0);
            assert_eq!(out.sigma[2][(k, 1)], 0.0);
        }
    }

    #[test]
    fn recursion_state_invariants() {
        let spec = ModelSpec::time_invariant(
            5,
            DMatrix::from_element(1, 1, 0.7),
            DVector::from_element(1, 0.2),
            DMatrix::from_element(1, 1, 0.6),
            DMatrix::from_element(1, 1, 1.3),
            DVector::from_element(1, -0.1),
            DMatrix::from_element(1, 1, 0.8),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
        );
        let (_, obs) = crate::model::simulate(&spec, 11).unwrap();
        let filt = filter(&spec, &obs).unwrap();
        let out = harvey_backward(&spec, &obs, &filt).unwrap();
        // Terminal conditions and finiteness at the front.
        assert_eq!(out.r[5][0], 0.0);
        assert_eq!(out.n_mat[5][(0, 0)], 0.0);
        assert!(out.r[0][0].is_finite());
        assert!(out.n_mat[0][(0, 0)].is_finite());
        for t in 0..=5 {
            let (lo, _) = crate::linalg::eig_bounds(&out.n_mat[t]);
            assert!(lo >= -1e-12, "N_{t} has negative eigenvalue {lo}");
        }
    }
}
