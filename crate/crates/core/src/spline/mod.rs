//! Penalized B-spline smoothing of discretely observed model output.
//!
//! Each observed series is represented as a [`FunctionalSample`]: a
//! coefficient vector over a clamped [`SplineBasis`]. Coefficients minimize
//! `||y - Bc||^2 + lambda * c'Rc`, where `R` is the integrated squared
//! second-derivative penalty, and `lambda` can be picked by generalized
//! cross validation.

mod basis;
mod quadrature;
mod smooth;

pub use basis::{Domain, FunctionalSample, SplineBasis, TimeGrid};
pub use quadrature::gauss_legendre;
pub use smooth::{
    default_lambda_ladder, design_matrix, fit, gcv_score, penalty_matrix, select_lambda,
    SmoothingReport,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("degenerate domain [{start}, {end}]: start must be finite and strictly below end")]
    DegenerateDomain { start: f64, end: f64 },

    #[error("invalid basis: {n_basis} basis functions cannot carry degree {degree} (need at least {})", degree + 1)]
    InvalidBasis { n_basis: usize, degree: usize },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("t = {t} lies outside the basis domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("smoothing parameter must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),

    #[error("penalized least-squares system is singular (lambda = {lambda})")]
    SingularFit { lambda: f64 },

    #[error("GCV score undefined: hat-matrix trace {trace} reaches the number of observations {n}")]
    UndefinedScore { trace: f64, n: usize },

    #[error("no candidate smoothing parameter produced a defined GCV score")]
    NoValidLambda,
}
