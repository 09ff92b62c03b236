//! Model and data containers: the linear-Gaussian state-space specification,
//! observation sets with an explicit missingness mask, and seeded simulation.
//!
//! The model is
//!
//! ```text
//! x_t = B_t x_{t-1} + u_t + w_t,   w_t ~ N(0, Q_t)
//! y_t = Z_t x_t + a_t + v_t,       v_t ~ N(0, R_t)
//! x_0 ~ N(xi, Lambda)
//! ```
//!
//! for t = 1..T. Time indices in the public API are 1-based to match the
//! recursion above; state sequences run over t = 0..T.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// A parameter that is either shared across all time steps or given per step.
///
/// Shared storage broadcasts: `at(t)` returns the same matrix for every `t`,
/// so a broadcast model is bit-identical to one with `T` explicit copies.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSeq<T> {
    Shared(T),
    PerTime(Vec<T>),
}

impl<T> ParamSeq<T> {
    /// Value at 1-based time `t`.
    pub fn at(&self, t: usize) -> &T {
        match self {
            ParamSeq::Shared(v) => v,
            ParamSeq::PerTime(vs) => &vs[t - 1],
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, ParamSeq::Shared(_))
    }

    /// Apply a fallible transform to every stored value.
    pub fn try_map<U, E>(
        &self,
        mut f: impl FnMut(&T) -> std::result::Result<U, E>,
    ) -> std::result::Result<ParamSeq<U>, E> {
        Ok(match self {
            ParamSeq::Shared(v) => ParamSeq::Shared(f(v)?),
            ParamSeq::PerTime(vs) => {
                ParamSeq::PerTime(vs.iter().map(&mut f).collect::<std::result::Result<_, _>>()?)
            }
        })
    }

    /// Iterate `(time, value)` pairs to validate: shared values yield one
    /// entry with `time = None`, per-time values one entry per step.
    fn checks(&self) -> Vec<(Option<usize>, &T)> {
        match self {
            ParamSeq::Shared(v) => vec![(None, v)],
            ParamSeq::PerTime(vs) => vs.iter().enumerate().map(|(i, v)| (Some(i + 1), v)).collect(),
        }
    }
}

/// Full parameterization of the state-space model.
///
/// Fields mirror the recursion: `b`/`u`/`q` drive the states, `z`/`a`/`r`
/// the observations, `xi`/`lambda` the initial state at t = 0. Construct
/// directly or via [`ModelSpec::time_invariant`], then run
/// [`validate_model`]; operations assume a validated spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// State dimension m.
    pub num_states: usize,
    /// Observation dimension n.
    pub num_obs: usize,
    /// Number of observed time steps T.
    pub horizon: usize,
    /// State transition, m x m. `b.at(t)` maps x_{t-1} to time t.
    pub b: ParamSeq<DMatrix<f64>>,
    /// State offset, length m.
    pub u: ParamSeq<DVector<f64>>,
    /// State noise covariance, m x m PSD.
    pub q: ParamSeq<DMatrix<f64>>,
    /// Observation map, n x m.
    pub z: ParamSeq<DMatrix<f64>>,
    /// Observation offset, length n.
    pub a: ParamSeq<DVector<f64>>,
    /// Observation noise covariance, n x n PSD.
    pub r: ParamSeq<DMatrix<f64>>,
    /// Initial state mean at t = 0.
    pub xi: DVector<f64>,
    /// Initial state covariance at t = 0; may be singular or zero.
    pub lambda: DMatrix<f64>,
}

impl ModelSpec {
    /// Build a time-invariant model from single parameter values.
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        horizon: usize,
        b: DMatrix<f64>,
        u: DVector<f64>,
        q: DMatrix<f64>,
        z: DMatrix<f64>,
        a: DVector<f64>,
        r: DMatrix<f64>,
        xi: DVector<f64>,
        lambda: DMatrix<f64>,
    ) -> Self {
        ModelSpec {
            num_states: b.nrows(),
            num_obs: z.nrows(),
            horizon,
            b: ParamSeq::Shared(b),
            u: ParamSeq::Shared(u),
            q: ParamSeq::Shared(q),
            z: ParamSeq::Shared(z),
            a: ParamSeq::Shared(a),
            r: ParamSeq::Shared(r),
            xi,
            lambda,
        }
    }

    pub fn b_at(&self, t: usize) -> &DMatrix<f64> {
        self.b.at(t)
    }
    pub fn u_at(&self, t: usize) -> &DVector<f64> {
        self.u.at(t)
    }
    pub fn q_at(&self, t: usize) -> &DMatrix<f64> {
        self.q.at(t)
    }
    pub fn z_at(&self, t: usize) -> &DMatrix<f64> {
        self.z.at(t)
    }
    pub fn a_at(&self, t: usize) -> &DVector<f64> {
        self.a.at(t)
    }
    pub fn r_at(&self, t: usize) -> &DMatrix<f64> {
        self.r.at(t)
    }

    /// Cheap structural check used as a precondition by the numerical
    /// operations; full invariant checking lives in [`validate_model`].
    pub(crate) fn check_dims(&self) -> Result<()> {
        let violations = structural_violations(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(violations))
        }
    }
}

/// What an invariant violation is about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    Asymmetry,
    NegativeEigenvalue,
    NonFinite,
}

/// One invariant violation, tagged with the parameter name and the offending
/// time step (`None` means the shared value, i.e. all t).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub parameter: &'static str,
    pub time: Option<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let when = match self.time {
            Some(t) => format!("t={t}"),
            None => "all t".to_string(),
        };
        let kind = match self.kind {
            ViolationKind::Dimension => "dimension",
            ViolationKind::Asymmetry => "asymmetry",
            ViolationKind::NegativeEigenvalue => "negative eigenvalue",
            ViolationKind::NonFinite => "non-finite entry",
        };
        write!(f, "{}[{}]: {} ({})", self.parameter, when, kind, self.detail)
    }
}

fn violation(
    parameter: &'static str,
    time: Option<usize>,
    kind: ViolationKind,
    detail: String,
) -> Violation {
    Violation {
        parameter,
        time,
        kind,
        detail,
    }
}

fn check_seq_len<T>(
    spec_horizon: usize,
    name: &'static str,
    seq: &ParamSeq<T>,
    out: &mut Vec<Violation>,
) {
    if let ParamSeq::PerTime(vs) = seq {
        if vs.len() != spec_horizon {
            out.push(violation(
                name,
                None,
                ViolationKind::Dimension,
                format!("sequence has {} entries, expected T={}", vs.len(), spec_horizon),
            ));
        }
    }
}

fn structural_violations(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let (m, n, horizon) = (spec.num_states, spec.num_obs, spec.horizon);
    if m == 0 {
        out.push(violation("m", None, ViolationKind::Dimension, "num_states must be positive".into()));
    }
    if n == 0 {
        out.push(violation("n", None, ViolationKind::Dimension, "num_obs must be positive".into()));
    }
    if horizon == 0 {
        out.push(violation("T", None, ViolationKind::Dimension, "horizon must be positive".into()));
    }
    if m == 0 || n == 0 || horizon == 0 {
        return out;
    }

    check_seq_len(horizon, "B", &spec.b, &mut out);
    check_seq_len(horizon, "u", &spec.u, &mut out);
    check_seq_len(horizon, "Q", &spec.q, &mut out);
    check_seq_len(horizon, "Z", &spec.z, &mut out);
    check_seq_len(horizon, "a", &spec.a, &mut out);
    check_seq_len(horizon, "R", &spec.r, &mut out);
    if !out.is_empty() {
        // Per-time sequences of the wrong length make indexed checks unsafe.
        return out;
    }

    let mut mat_dims = |name: &'static str, seq: &ParamSeq<DMatrix<f64>>, rows: usize, cols: usize| {
        for (time, mat) in seq.checks() {
            if mat.nrows() != rows || mat.ncols() != cols {
                out.push(violation(
                    name,
                    time,
                    ViolationKind::Dimension,
                    format!("is {}x{}, expected {}x{}", mat.nrows(), mat.ncols(), rows, cols),
                ));
            }
        }
    };
    mat_dims("B", &spec.b, m, m);
    mat_dims("Q", &spec.q, m, m);
    mat_dims("Z", &spec.z, n, m);
    mat_dims("R", &spec.r, n, n);

    let mut vec_dims = |name: &'static str, seq: &ParamSeq<DVector<f64>>, len: usize| {
        for (time, v) in seq.checks() {
            if v.len() != len {
                out.push(violation(
                    name,
                    time,
                    ViolationKind::Dimension,
                    format!("has length {}, expected {}", v.len(), len),
                ));
            }
        }
    };
    vec_dims("u", &spec.u, m);
    vec_dims("a", &spec.a, n);

    if spec.xi.len() != m {
        out.push(violation(
            "xi",
            None,
            ViolationKind::Dimension,
            format!("has length {}, expected {}", spec.xi.len(), m),
        ));
    }
    if spec.lambda.nrows() != m || spec.lambda.ncols() != m {
        out.push(violation(
            "Lambda",
            None,
            ViolationKind::Dimension,
            format!("is {}x{}, expected {}x{}", spec.lambda.nrows(), spec.lambda.ncols(), m, m),
        ));
    }
    out
}

fn psd_violations(
    name: &'static str,
    time: Option<usize>,
    mat: &DMatrix<f64>,
    out: &mut Vec<Violation>,
) {
    if mat.iter().any(|x| !x.is_finite()) {
        out.push(violation(name, time, ViolationKind::NonFinite, "contains NaN or infinity".into()));
        return;
    }
    let scale = linalg::max_abs(mat).max(1.0);
    let asym = linalg::max_asymmetry(mat);
    if asym > linalg::SYM_RTOL * scale {
        out.push(violation(
            name,
            time,
            ViolationKind::Asymmetry,
            format!("max |A - A^T| = {asym:.3e} exceeds {:.0e} relative", linalg::SYM_RTOL),
        ));
        return;
    }
    let (lo, hi) = linalg::eig_bounds(mat);
    if lo < -linalg::PSD_EIG_RTOL * hi.max(1.0) {
        out.push(violation(
            name,
            time,
            ViolationKind::NegativeEigenvalue,
            format!("smallest eigenvalue {lo:.3e}"),
        ));
    }
}

/// Check every model invariant and return all violations found.
///
/// Violations are data, not failures: an empty list means the model is valid.
pub fn validate_model(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = structural_violations(spec);
    if !out.is_empty() {
        return out;
    }

    let mut finite_mat = |name: &'static str, seq: &ParamSeq<DMatrix<f64>>| {
        for (time, mat) in seq.checks() {
            if mat.iter().any(|x| !x.is_finite()) {
                out.push(violation(name, time, ViolationKind::NonFinite, "contains NaN or infinity".into()));
            }
        }
    };
    finite_mat("B", &spec.b);
    finite_mat("Z", &spec.z);
    let mut finite_vec = |name: &'static str, seq: &ParamSeq<DVector<f64>>| {
        for (time, v) in seq.checks() {
            if v.iter().any(|x| !x.is_finite()) {
                out.push(violation(name, time, ViolationKind::NonFinite, "contains NaN or infinity".into()));
            }
        }
    };
    finite_vec("u", &spec.u);
    finite_vec("a", &spec.a);
    if spec.xi.iter().any(|x| !x.is_finite()) {
        out.push(violation("xi", None, ViolationKind::NonFinite, "contains NaN or infinity".into()));
    }

    for (time, mat) in spec.q.checks() {
        psd_violations("Q", time, mat, &mut out);
    }
    for (time, mat) in spec.r.checks() {
        psd_violations("R", time, mat, &mut out);
    }
    psd_violations("Lambda", None, &spec.lambda, &mut out);
    out
}

/// Observed data with an explicit missingness mask.
///
/// `mask[(i, t-1)] == true` means series i (0-based) is observed at time t.
/// Values under unmasked cells carry no meaning and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub y: DMatrix<f64>,
    pub mask: DMatrix<bool>,
}

impl ObservationSet {
    pub fn new(y: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if y.nrows() != mask.nrows() || y.ncols() != mask.ncols() {
            return Err(Error::Dimension(format!(
                "data is {}x{} but mask is {}x{}",
                y.nrows(),
                y.ncols(),
                mask.nrows(),
                mask.ncols()
            )));
        }
        Ok(ObservationSet { y, mask })
    }

    /// All cells observed.
    pub fn fully_observed(y: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(y.nrows(), y.ncols(), true);
        ObservationSet { y, mask }
    }

    pub fn num_series(&self) -> usize {
        self.y.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.y.ncols()
    }

    /// 0-based rows observed at 1-based time `t`.
    pub fn observed_rows(&self, t: usize) -> Vec<usize> {
        (0..self.y.nrows()).filter(|&i| self.mask[(i, t - 1)]).collect()
    }

    /// 0-based rows missing at 1-based time `t`.
    pub fn missing_rows(&self, t: usize) -> Vec<usize> {
        (0..self.y.nrows()).filter(|&i| !self.mask[(i, t - 1)]).collect()
    }

    pub fn is_observed(&self, row: usize, t: usize) -> bool {
        self.mask[(row, t - 1)]
    }

    /// Data column at 1-based time `t`.
    pub fn y_col(&self, t: usize) -> DVector<f64> {
        self.y.column(t - 1).into_owned()
    }
}

/// One simulated trajectory: states (t = 0..T in columns) and the noise
/// draws that generated them. The recursion holds exactly:
/// `x_t = B_t x_{t-1} + u_t + w_t` and `y_t = Z_t x_t + a_t + v_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRealization {
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Clear the mask at the given `(series, t)` cells, both 1-based.
///
/// Values are untouched; only the mask changes.
pub fn apply_mask(obs: &ObservationSet, drop: &[(usize, usize)]) -> Result<ObservationSet> {
    let mut out = obs.clone();
    for &(series, t) in drop {
        if series == 0 || series > obs.num_series() || t == 0 || t > obs.horizon() {
            return Err(Error::InvalidArgument(format!(
                "cell (series={series}, t={t}) out of range for {}x{} data",
                obs.num_series(),
                obs.horizon()
            )));
        }
        out.mask[(series - 1, t - 1)] = false;
    }
    Ok(out)
}

fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Simulate one realization, deterministic in `seed`.
pub fn simulate(spec: &ModelSpec, seed: u64) -> Result<(StateRealization, ObservationSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(spec, &mut rng)
}

/// Simulate one realization using a caller-provided RNG.
///
/// Draw order is fixed: x_0 (m standard normals), then for each t = 1..T the
/// state noise w_t (m draws) followed by the observation noise v_t (n draws).
pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<(StateRealization, ObservationSet)> {
    spec.check_dims()?;
    let (m, n, horizon) = (spec.num_states, spec.num_obs, spec.horizon);

    let numerical = |t: usize, detail: String| Error::Numerical {
        t,
        op: "simulate: covariance factorization",
        detail,
    };
    let lambda_factor = linalg::sqrt_psd(&spec.lambda).map_err(|e| numerical(0, e))?;
    let mut t_hint = 0;
    let q_factors = spec.q.try_map(|q| {
        t_hint += 1;
        linalg::sqrt_psd(q).map_err(|e| numerical(t_hint, e))
    })?;
    t_hint = 0;
    let r_factors = spec.r.try_map(|r| {
        t_hint += 1;
        linalg::sqrt_psd(r).map_err(|e| numerical(t_hint, e))
    })?;

    let mut x = DMatrix::zeros(m, horizon + 1);
    let mut w = DMatrix::zeros(m, horizon);
    let mut v = DMatrix::zeros(n, horizon);
    let mut y = DMatrix::zeros(n, horizon);

    let x0 = &spec.xi + &lambda_factor * standard_normal_vec(rng, m);
    x.set_column(0, &x0);

    for t in 1..=horizon {
        let wt = q_factors.at(t) * standard_normal_vec(rng, m);
        let xt = spec.b_at(t) * x.column(t - 1) + spec.u_at(t) + &wt;
        let vt = r_factors.at(t) * standard_normal_vec(rng, n);
        let yt = spec.z_at(t) * &xt + spec.a_at(t) + &vt;
        w.set_column(t - 1, &wt);
        x.set_column(t, &xt);
        v.set_column(t - 1, &vt);
        y.set_column(t - 1, &yt);
    }

    Ok((
        StateRealization { x, w, v },
        ObservationSet::fully_observed(y),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_model(b: f64, u: f64, q: f64, z: f64, a: f64, r: f64, xi: f64, lambda: f64, horizon: usize) -> ModelSpec {
        ModelSpec::time_invariant(
            horizon,
            DMatrix::from_element(1, 1, b),
            DVector::from_element(1, u),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, z),
            DVector::from_element(1, a),
            DMatrix::from_element(1, 1, r),
            DVector::from_element(1, xi),
            DMatrix::from_element(1, 1, lambda),
        )
    }

    #[test]
    fn identity_scalar_model_is_valid() {
        let spec = scalar_model(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 3);
        assert!(validate_model(&spec).is_empty());
    }

    #[test]
    fn asymmetric_q_is_flagged_at_its_time() {
        let mut spec = scalar_model(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 3);
        spec.num_states = 2;
        let eye = DMatrix::<f64>::identity(2, 2);
        spec.b = ParamSeq::Shared(eye.clone());
        spec.u = ParamSeq::Shared(DVector::zeros(2));
        spec.z = ParamSeq::Shared(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        spec.xi = DVector::zeros(2);
        spec.lambda = eye.clone();
        spec.q = ParamSeq::PerTime(vec![
            eye.clone(),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            eye.clone(),
        ]);
        let violations = validate_model(&spec);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].parameter, "Q");
        assert_eq!(violations[0].time, Some(2));
        assert_eq!(violations[0].kind, ViolationKind::Asymmetry);
    }

    #[test]
    fn negative_r_is_flagged_for_all_t() {
        let spec = scalar_model(1.0, 0.0, 1.0, 1.0, 0.0, -1.0, 0.0, 1.0, 3);
        let violations = validate_model(&spec);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].parameter, "R");
        assert_eq!(violations[0].time, None);
        assert_eq!(violations[0].kind, ViolationKind::NegativeEigenvalue);
    }

    #[test]
    fn zero_noise_model_simulates_to_zero() {
        let spec = scalar_model(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 4);
        let (real, obs) = simulate(&spec, 7).unwrap();
        assert_eq!(linalg::max_abs(&real.x), 0.0);
        assert_eq!(linalg::max_abs(&obs.y), 0.0);
        assert!(obs.mask.iter().all(|&b| b));
    }

    #[test]
    fn simulation_is_deterministic_in_seed() {
        let spec = scalar_model(0.8, 0.1, 0.5, 1.0, 0.0, 0.3, 0.2, 1.0, 6);
        let (ra, oa) = simulate(&spec, 42).unwrap();
        let (rb, ob) = simulate(&spec, 42).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(oa, ob);
        let (rc, _) = simulate(&spec, 43).unwrap();
        assert_ne!(ra, rc);
    }

    #[test]
    fn simulated_recursion_holds_exactly() {
        let spec = scalar_model(0.9, 0.2, 0.4, 1.5, -0.1, 0.3, 0.0, 1.0, 5);
        let (real, obs) = simulate(&spec, 3).unwrap();
        for t in 1..=spec.horizon {
            let x_expect = spec.b_at(t) * real.x.column(t - 1) + spec.u_at(t) + real.w.column(t - 1);
            let y_expect = spec.z_at(t) * real.x.column(t) + spec.a_at(t) + real.v.column(t - 1);
            assert_eq!(real.x.column(t), x_expect.column(0));
            assert_eq!(obs.y.column(t - 1), y_expect.column(0));
        }
    }

    #[test]
    fn sample_variance_of_y1_matches_propagated_variance() {
        // Random-walk model: var(Y_1) = Lambda + Q + R = 3. Sample variance of
        // a Gaussian has SE sigma^2 * sqrt(2 / (N - 1)).
        let spec = scalar_model(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1);
        let num_sims = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for sim in 0..num_sims {
            let (_, obs) = simulate(&spec, 1000 + sim as u64).unwrap();
            let y1 = obs.y[(0, 0)];
            sum += y1;
            sumsq += y1 * y1;
        }
        let nf = num_sims as f64;
        let mean = sum / nf;
        let var = (sumsq - nf * mean * mean) / (nf - 1.0);
        let se = 3.0 * (2.0 / (nf - 1.0)).sqrt();
        assert!((var - 3.0).abs() <= 3.0 * se, "var={var}, want 3 +- {}", 3.0 * se);
    }

    #[test]
    fn apply_mask_identity_and_complement() {
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let obs = ObservationSet::fully_observed(y);
        let same = apply_mask(&obs, &[]).unwrap();
        assert_eq!(same, obs);

        let all = apply_mask(&obs, &[(1, 1), (1, 2), (1, 3)]).unwrap();
        assert!(all.mask.iter().all(|&b| !b));
        assert_eq!(all.y, obs.y);
    }

    #[test]
    fn apply_mask_single_cell() {
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let obs = ObservationSet::fully_observed(y);
        let masked = apply_mask(&obs, &[(1, 2)]).unwrap();
        assert!(masked.observed_rows(2).is_empty());
        assert_eq!(masked.observed_rows(1), vec![0]);
        assert_eq!(masked.observed_rows(3), vec![0]);
        assert!(apply_mask(&obs, &[(2, 1)]).is_err());
        assert!(apply_mask(&obs, &[(1, 4)]).is_err());
    }

    #[test]
    fn broadcast_equals_explicit_sequences() {
        let shared = scalar_model(0.7, 0.1, 0.5, 1.2, 0.3, 0.4, 0.1, 0.9, 4);
        let mut explicit = shared.clone();
        explicit.b = ParamSeq::PerTime(vec![shared.b.at(1).clone(); 4]);
        explicit.q = ParamSeq::PerTime(vec![shared.q.at(1).clone(); 4]);
        explicit.r = ParamSeq::PerTime(vec![shared.r.at(1).clone(); 4]);
        let (ra, oa) = simulate(&shared, 9).unwrap();
        let (rb, ob) = simulate(&explicit, 9).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(oa, ob);
    }

    #[test]
    fn monte_carlo_variance_accumulates_over_time() {
        // var(Y_3) = Lambda + 3 Q + R = 5 for the random walk; 5 SE bound.
        let spec = scalar_model(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 3);
        let num_sims = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for sim in 0..num_sims {
            let (_, obs) = simulate(&spec, 5000 + sim as u64).unwrap();
            let y3 = obs.y[(0, 2)];
            sum += y3;
            sumsq += y3 * y3;
        }
        let nf = num_sims as f64;
        let mean = sum / nf;
        let var = (sumsq - nf * mean * mean) / (nf - 1.0);
        let se = 5.0 * (2.0 / (nf - 1.0)).sqrt();
        assert!((var - 5.0).abs() <= 5.0 * se, "var={var}, want 5 +- {}", 5.0 * se);
    }

    #[test]
    fn validated_model_always_simulates() {
        let spec = scalar_model(0.5, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 3);
        assert!(validate_model(&spec).is_empty());
        assert!(simulate(&spec, 1).is_ok());
    }
}
