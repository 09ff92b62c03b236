//! Conditional residual diagnostics for linear-Gaussian state-space models.
//!
//! Given a (possibly time-varying) model
//!
//! ```text
//! x_t = B_t x_{t-1} + u_t + w_t,   w_t ~ N(0, Q_t)
//! y_t = Z_t x_t + a_t + v_t,       v_t ~ N(0, R_t)
//! x_0 ~ N(xi, Lambda)
//! ```
//!
//! and data with arbitrary missing cells, this crate computes the smoothed
//! model and state residuals, the exact joint covariance of those residuals
//! (in both the contemporaneous and the lagged stacking conventions), and
//! standardized residuals for outlier and structural-break screening. Two
//! independent computations of the covariances are provided — closed-form
//! blocks assembled from smoother output, and a backward disturbance-smoother
//! recursion — plus a dense joint-Gaussian oracle that verifies both by
//! direct conditioning on any desk-scale model.

pub mod error;
pub mod harvey;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod smoothations;
pub mod ymoments;

pub mod cli;

pub use error::{Error, Result};
pub use harvey::{harvey_backward, harvey_standardize, HarveyResidualOutput};
pub use kalman::{filter, smooth, smooth_filtered, standardized_innovations, FilterOutput, SmootherOutput};
pub use model::{
    apply_mask, simulate, simulate_with_rng, validate_model, ModelSpec, ObservationSet, ParamSeq,
    StateRealization, Violation, ViolationKind,
};
pub use oracle::{build_joint, monte_carlo_check, residual_law_exact, JointGaussian};
pub use smoothations::{
    cov_v_w_next, cov_v_w_same, flag_outliers, joint_residual_covariance, model_residual_variance,
    residuals, standardize, state_residual_variance, Convention, ResidualReport, Standardized,
    StdMode,
};
pub use ymoments::{conditional_y_moments, ConditionalYMoments};
