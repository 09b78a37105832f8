//! Functional finite-change sensitivity analysis.
//!
//! Model runs observed on a discrete grid are smoothed into spline curves
//! ([`spline`]), arranged in a one-at-a-time / all-but-one design
//! ([`design`]) and turned into functional sensitivity indices ([`fcsi`]).
//! Across an ensemble of models the indices are regressed pointwise
//! ([`fanova`]) and tested with interval-wise permutation tests ([`iwt`]).
//! [`pipeline`] chains the stages and writes the report files.

pub mod design;
pub mod fanova;
pub mod fcsi;
pub mod io;
pub mod iwt;
pub mod pipeline;
pub mod spline;
pub mod synthetic;

pub use design::{
    build_plan, compute_contrasts, validate_runs, ContrastSet, ExperimentPlan, InputFactor,
    RunLabel, RunRecord,
};
pub use fanova::{
    build_design, fit_pointwise_ols, t_statistic, DesignEncoding, DesignMatrix, FanovaFit,
    HypothesisSpec,
};
pub use fcsi::{compute_indices, normalize_set, NormalizedIndexSet, SensitivityIndexSet};
pub use io::{AnalysisConfig, LambdaChoice};
pub use iwt::{
    adjusted_pvalue_function, interval_pvalue, pointwise_pvalues, significant_intervals,
    PValueFunction, PermutationConfig, PermutationScheme, SignificantIntervals,
};
pub use pipeline::{run_pipeline, write_outputs, ErrorKind, PipelineError, PipelineOutput, Stage};
pub use spline::{Domain, FunctionalSample, SplineBasis, TimeGrid};
pub use synthetic::{generate_ensemble, SyntheticModelSpec};
