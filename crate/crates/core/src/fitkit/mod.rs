//! Positive-parameter nonlinear least squares and closed-form log-log fits.

mod fit;
mod lbfgs;
mod linalg;
mod linear;
pub mod models;
mod normalize;
mod softplus;

pub use self::fit::{fit_model, minimize, FitOptions, FitProblem, FitResult, LogObjective};
pub use self::lbfgs::{lbfgs, LbfgsOptions, LbfgsReport, Termination};
pub use self::linalg::solve;
pub use self::linear::{fit_loglinear, fit_power_law, LogLinearFit, PowerLawFit};
pub use self::models::{BatchRule, Constant, DataEfficiency, Model, PowerLaw, Sample, SharedDataEfficiency};
pub use self::normalize::{
    input_scale, input_scale_or_fixed, normalize_inputs, InputScale, NormalizationState, NORM_HIGH, NORM_LOW,
};
pub use self::softplus::{inverse_softplus, sigmoid, softplus};
