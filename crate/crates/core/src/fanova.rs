//! Pointwise functional OLS over the ensemble of contrast curves.
//!
//! Every contrast observation is one row of a design with `2p` columns laid
//! out as `[phi1_1 .. phi1_p, phiI_1 .. phiI_p]`. A first-order contrast
//! loads on `phi1_i`; a total-order contrast loads on `phi1_i + phiI_i`.
//! The regression is solved independently at every grid point.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::design::ContrastSet;
use crate::spline::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FanovaError {
    #[error("no contrast sets supplied")]
    NoContrasts,

    #[error("inconsistent design: {0}")]
    InconsistentDesign(String),

    #[error("design matrix is rank deficient ({rank} < {cols} columns)")]
    SingularDesign { rank: usize, cols: usize },

    #[error("residual variance undefined: {n_obs} observations for {n_coef} coefficients")]
    VarianceUndefined { n_obs: usize, n_coef: usize },

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// How contrasts enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DesignEncoding {
    /// First- and total-order contrasts, `2p` rows per model.
    #[default]
    Default,
    /// Adds the total-change contrast as a row loading on every column
    /// (`2p + 1` rows per model). Its expectation mixes interaction terms of
    /// several inputs, so the coefficients lose their per-input reading.
    IncludeTotalDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContrastKind {
    FirstOrder,
    TotalOrder,
    TotalDelta,
}

impl fmt::Display for ContrastKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContrastKind::FirstOrder => "first_order",
            ContrastKind::TotalOrder => "total_order",
            ContrastKind::TotalDelta => "total_delta",
        })
    }
}

/// Provenance of one design row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub model_id: String,
    pub kind: ContrastKind,
    pub input: Option<String>,
}

impl RowMeta {
    /// Stable identity string of the observation, independent of its
    /// position in the design.
    pub fn identity(&self) -> String {
        format!("{}\u{1f}{}\u{1f}{}", self.model_id, self.kind, self.input.as_deref().unwrap_or(""))
    }
}

/// Which block of the coefficient vector a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    FirstOrder,
    Interaction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    factors: Vec<String>,
    matrix: DMatrix<f64>,
    rows: Vec<RowMeta>,
}

impl DesignMatrix {
    pub fn new(
        factors: Vec<String>,
        matrix: DMatrix<f64>,
        rows: Vec<RowMeta>,
    ) -> Result<Self, FanovaError> {
        if matrix.ncols() != 2 * factors.len() {
            return Err(FanovaError::DimensionMismatch(format!(
                "{} columns for {} factors",
                matrix.ncols(),
                factors.len()
            )));
        }
        if matrix.nrows() != rows.len() {
            return Err(FanovaError::DimensionMismatch(format!(
                "{} rows but {} row descriptions",
                matrix.nrows(),
                rows.len()
            )));
        }
        Ok(Self { factors, matrix, rows })
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> &[RowMeta] {
        &self.rows
    }

    pub fn n_obs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn coefficient_index(&self, kind: CoefficientKind, factor: &str) -> Option<usize> {
        let i = self.factors.iter().position(|f| f == factor)?;
        Some(match kind {
            CoefficientKind::FirstOrder => i,
            CoefficientKind::Interaction => self.factors.len() + i,
        })
    }

    /// `phi1:<factor>` then `phiI:<factor>` labels, in column order.
    pub fn column_names(&self) -> Vec<String> {
        self.factors
            .iter()
            .map(|f| format!("phi1:{f}"))
            .chain(self.factors.iter().map(|f| format!("phiI:{f}")))
            .collect()
    }
}

/// Responses of every design row over the grid (`N x G`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub grid: TimeGrid,
    pub values: DMatrix<f64>,
}

pub fn build_design(
    contrast_sets: &[ContrastSet],
    encoding: DesignEncoding,
) -> Result<(DesignMatrix, ResponseMatrix), FanovaError> {
    let first = contrast_sets.first().ok_or(FanovaError::NoContrasts)?;
    let factors = first.factors.clone();
    let p = factors.len();
    let g = first.grid.len();
    for set in contrast_sets {
        if set.factors != factors {
            return Err(FanovaError::InconsistentDesign(format!(
                "model `{}` has inputs {:?}, expected {:?}",
                set.model_id, set.factors, factors
            )));
        }
        if set.grid != first.grid {
            return Err(FanovaError::InconsistentDesign(format!(
                "model `{}` uses a different evaluation grid",
                set.model_id
            )));
        }
    }
    let per_model = match encoding {
        DesignEncoding::Default => 2 * p,
        DesignEncoding::IncludeTotalDelta => 2 * p + 1,
    };
    let n = per_model * contrast_sets.len();
    let mut x = DMatrix::zeros(n, 2 * p);
    let mut y = DMatrix::zeros(n, g);
    let mut rows = Vec::with_capacity(n);
    let mut r = 0;
    for set in contrast_sets {
        for (i, name) in factors.iter().enumerate() {
            x[(r, i)] = 1.0;
            y.row_mut(r).copy_from_slice(&set.first_order[i]);
            rows.push(RowMeta {
                model_id: set.model_id.clone(),
                kind: ContrastKind::FirstOrder,
                input: Some(name.clone()),
            });
            r += 1;
            x[(r, i)] = 1.0;
            x[(r, p + i)] = 1.0;
            y.row_mut(r).copy_from_slice(&set.total_order[i]);
            rows.push(RowMeta {
                model_id: set.model_id.clone(),
                kind: ContrastKind::TotalOrder,
                input: Some(name.clone()),
            });
            r += 1;
        }
        if encoding == DesignEncoding::IncludeTotalDelta {
            x.row_mut(r).fill(1.0);
            y.row_mut(r).copy_from_slice(&set.total_delta);
            rows.push(RowMeta {
                model_id: set.model_id.clone(),
                kind: ContrastKind::TotalDelta,
                input: None,
            });
            r += 1;
        }
    }
    let design = DesignMatrix::new(factors, x, rows)?;
    Ok((design, ResponseMatrix { grid: first.grid.clone(), values: y }))
}

/// Pointwise OLS estimates with residuals and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct FanovaFit {
    pub grid: TimeGrid,
    pub design: DesignMatrix,
    pub responses: DMatrix<f64>,
    /// `2p x G`: row `j` is the coefficient function of column `j`.
    pub coefficients: DMatrix<f64>,
    /// `N x G`.
    pub residuals: DMatrix<f64>,
    /// Pointwise `RSS / (N - 2p)`; `None` when `N <= 2p`.
    pub sigma2: Option<Vec<f64>>,
    pub xtx_inverse: DMatrix<f64>,
}

impl FanovaFit {
    pub fn coefficient(&self, column: usize) -> Vec<f64> {
        self.coefficients.row(column).iter().copied().collect()
    }

    pub fn fitted(&self) -> DMatrix<f64> {
        self.design.matrix() * &self.coefficients
    }

    /// Coefficients, residuals and variance for other responses on the same design.
    pub(crate) fn refit(&self, responses: &DMatrix<f64>) -> (DMatrix<f64>, Option<Vec<f64>>) {
        let x = self.design.matrix();
        let coef = &self.xtx_inverse * (x.transpose() * responses);
        let resid = responses - x * &coef;
        (coef, residual_variance(&resid, x.ncols()))
    }
}

fn residual_variance(residuals: &DMatrix<f64>, n_coef: usize) -> Option<Vec<f64>> {
    let n = residuals.nrows();
    (n > n_coef).then(|| {
        residuals
            .column_iter()
            .map(|c| c.norm_squared() / (n - n_coef) as f64)
            .collect()
    })
}

pub fn fit_pointwise_ols(
    design: &DesignMatrix,
    responses: &ResponseMatrix,
) -> Result<FanovaFit, FanovaError> {
    let x = design.matrix();
    let y = &responses.values;
    if y.nrows() != x.nrows() || y.ncols() != responses.grid.len() {
        return Err(FanovaError::DimensionMismatch(format!(
            "responses are {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            x.nrows(),
            responses.grid.len()
        )));
    }
    let cols = x.ncols();
    let sv = x.clone().svd(false, false).singular_values;
    let tol = sv.max() * (x.nrows().max(cols) as f64) * f64::EPSILON * 16.0;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if x.nrows() < cols || rank < cols {
        return Err(FanovaError::SingularDesign { rank, cols });
    }
    let xtx = x.transpose() * x;
    let chol = xtx.cholesky().ok_or(FanovaError::SingularDesign { rank, cols })?;
    let xtx_inverse = chol.inverse();
    let coefficients = chol.solve(&(x.transpose() * y));
    let residuals = y - x * &coefficients;
    let sigma2 = residual_variance(&residuals, cols);
    Ok(FanovaFit {
        grid: responses.grid.clone(),
        design: design.clone(),
        responses: y.clone(),
        coefficients,
        residuals,
        sigma2,
        xtx_inverse,
    })
}

/// Linear hypothesis `C phi(t) = c0(t)` on the coefficient functions.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSpec {
    c: DMatrix<f64>,
    /// `q x G`; `None` means zero functions.
    c0: Option<DMatrix<f64>>,
    label: String,
}

impl HypothesisSpec {
    pub fn new(c: DMatrix<f64>, c0: Option<DMatrix<f64>>) -> Result<Self, FanovaError> {
        let q = c.nrows();
        if q == 0 || c.ncols() == 0 {
            return Err(FanovaError::InvalidHypothesis("C must have at least one row".into()));
        }
        let sv = c.clone().svd(false, false).singular_values;
        let tol = sv.max() * (q.max(c.ncols()) as f64) * f64::EPSILON * 16.0;
        if q > c.ncols() || sv.iter().filter(|&&s| s > tol).count() < q {
            return Err(FanovaError::InvalidHypothesis(format!("C ({q} rows) is not full row rank")));
        }
        if let Some(c0) = &c0 {
            if c0.nrows() != q {
                return Err(FanovaError::InvalidHypothesis(format!(
                    "c0 has {} rows, C has {q}",
                    c0.nrows()
                )));
            }
        }
        let label = format!("C[{q}x{}]", c.ncols());
        Ok(Self { c, c0, label })
    }

    /// Tests that coefficient `column` is zero everywhere.
    pub fn select(n_coef: usize, column: usize) -> Result<Self, FanovaError> {
        if column >= n_coef {
            return Err(FanovaError::InvalidHypothesis(format!(
                "column {column} out of range for {n_coef} coefficients"
            )));
        }
        let mut c = DMatrix::zeros(1, n_coef);
        c[(0, column)] = 1.0;
        Self::new(c, None)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn c0(&self) -> Option<&DMatrix<f64>> {
        self.c0.as_ref()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    fn check(&self, fit: &FanovaFit) -> Result<(), FanovaError> {
        if self.c.ncols() != fit.coefficients.nrows() {
            return Err(FanovaError::DimensionMismatch(format!(
                "C has {} columns, the model has {} coefficients",
                self.c.ncols(),
                fit.coefficients.nrows()
            )));
        }
        if let Some(c0) = &self.c0 {
            if c0.ncols() != fit.grid.len() {
                return Err(FanovaError::DimensionMismatch(format!(
                    "c0 has {} grid points, the fit has {}",
                    c0.ncols(),
                    fit.grid.len()
                )));
            }
        }
        Ok(())
    }

    /// `C phi - c0` at every grid point (`q x G`).
    fn discrepancy(&self, coefficients: &DMatrix<f64>) -> DMatrix<f64> {
        let d = &self.c * coefficients;
        match &self.c0 {
            Some(c0) => d - c0,
            None => d,
        }
    }
}

/// `num / sqrt(den2)` with the degenerate cases resolved: a zero
/// denominator gives a signed infinity, or zero when the numerator is zero.
fn ratio(num: f64, den2: f64) -> f64 {
    if den2 > 0.0 {
        num / den2.sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        num.signum() * f64::INFINITY
    }
}

/// Precomputed pieces of a hypothesis on a fixed design.
pub(crate) struct PreparedHypothesis<'a> {
    spec: &'a HypothesisSpec,
    /// `diag(C (X'X)^-1 C')`.
    scale: Vec<f64>,
    /// `(C (X'X)^-1 C')^-1`, used for the quadratic form when `q > 1`.
    middle_inverse: DMatrix<f64>,
    /// `(X'X)^-1 C' (C (X'X)^-1 C')^-1`, for the constrained (reduced) fit.
    projector: DMatrix<f64>,
}

impl<'a> PreparedHypothesis<'a> {
    pub(crate) fn new(fit: &FanovaFit, spec: &'a HypothesisSpec) -> Result<Self, FanovaError> {
        spec.check(fit)?;
        let middle = &spec.c * &fit.xtx_inverse * spec.c.transpose();
        let scale = middle.diagonal().iter().copied().collect();
        let middle_inverse = middle.clone().try_inverse().ok_or_else(|| {
            FanovaError::InvalidHypothesis("C (X'X)^-1 C' is singular".into())
        })?;
        let projector = &fit.xtx_inverse * spec.c.transpose() * &middle_inverse;
        Ok(Self { spec, scale, middle_inverse, projector })
    }

    pub(crate) fn t_statistics(
        &self,
        coefficients: &DMatrix<f64>,
        sigma2: &[f64],
    ) -> Vec<Vec<f64>> {
        let d = self.spec.discrepancy(coefficients);
        (0..d.nrows())
            .map(|j| {
                (0..d.ncols()).map(|k| ratio(d[(j, k)], sigma2[k] * self.scale[j])).collect()
            })
            .collect()
    }

    /// Pointwise statistic used by the interval-wise test: `t^2` when
    /// `q = 1`, the Wald quadratic form `d' (C A C')^-1 d / sigma2` otherwise.
    pub(crate) fn pointwise(&self, coefficients: &DMatrix<f64>, sigma2: &[f64]) -> Vec<f64> {
        if self.spec.q() == 1 {
            return self.t_statistics(coefficients, sigma2)[0].iter().map(|t| t * t).collect();
        }
        let d = self.spec.discrepancy(coefficients);
        (0..d.ncols())
            .map(|k| {
                let dk: DVector<f64> = d.column(k).into_owned();
                let quad = (dk.transpose() * &self.middle_inverse * &dk)[(0, 0)].max(0.0);
                let s2 = sigma2[k];
                if s2 > 0.0 {
                    quad / s2
                } else if quad == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    /// Fitted values of the model constrained to satisfy the null hypothesis.
    pub(crate) fn reduced_fitted(&self, fit: &FanovaFit) -> DMatrix<f64> {
        let d = self.spec.discrepancy(&fit.coefficients);
        let constrained = &fit.coefficients - &self.projector * d;
        fit.design.matrix() * constrained
    }
}

/// Pointwise t-statistics `(C phi(t) - c0(t))_j / sqrt(sigma2(t) [C (X'X)^-1 C']_jj)`,
/// one vector over the grid per hypothesis row.
pub fn t_statistic(fit: &FanovaFit, spec: &HypothesisSpec) -> Result<Vec<Vec<f64>>, FanovaError> {
    let prepared = PreparedHypothesis::new(fit, spec)?;
    let sigma2 = fit.sigma2.as_ref().ok_or(FanovaError::VarianceUndefined {
        n_obs: fit.design.n_obs(),
        n_coef: fit.design.n_coef(),
    })?;
    Ok(prepared.t_statistics(&fit.coefficients, sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::RunLabel;
    use std::collections::BTreeMap;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new((0..n).map(|k| k as f64).collect()).unwrap()
    }

    fn set(model: &str, p: usize, g: usize, f: impl Fn(&[f64], f64) -> f64) -> ContrastSet {
        let grid = grid(g);
        let factors: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
        let curve = |x: Vec<f64>| grid.points().iter().map(|&t| f(&x, t)).collect::<Vec<_>>();
        let mut values = BTreeMap::new();
        values.insert(RunLabel::Base, curve(vec![0.0; p]));
        values.insert(RunLabel::Full, curve(vec![1.0; p]));
        for (i, name) in factors.iter().enumerate() {
            let mut only = vec![0.0; p];
            only[i] = 1.0;
            let mut except = vec![1.0; p];
            except[i] = 0.0;
            values.insert(RunLabel::Only(name.clone()), curve(only));
            values.insert(RunLabel::Except(name.clone()), curve(except));
        }
        ContrastSet::from_values(model, grid.clone(), factors, &values).unwrap()
    }

    #[test]
    fn design_shapes() {
        let sets: Vec<ContrastSet> =
            (0..5).map(|m| set(&format!("m{m}"), 5, 3, |x, _| x.iter().sum())).collect();
        let (x, y) = build_design(&sets, DesignEncoding::Default).unwrap();
        assert_eq!((x.n_obs(), x.n_coef()), (50, 10));
        assert_eq!(y.values.shape(), (50, 3));
        let (x, _) = build_design(&sets, DesignEncoding::IncludeTotalDelta).unwrap();
        assert_eq!(x.n_obs(), 55);

        let (x, _) = build_design(&[set("m", 1, 2, |x, _| x[0])], DesignEncoding::Default).unwrap();
        assert_eq!(x.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(x.column_names(), ["phi1:x1", "phiI:x1"]);
    }

    #[test]
    fn inconsistent_inputs_are_rejected() {
        let a = set("a", 2, 3, |x, _| x[0]);
        let b = set("b", 3, 3, |x, _| x[0]);
        assert!(matches!(
            build_design(&[a, b], DesignEncoding::Default),
            Err(FanovaError::InconsistentDesign(_))
        ));
        assert_eq!(build_design(&[], DesignEncoding::Default), Err(FanovaError::NoContrasts));
    }

    #[test]
    fn zero_responses_fit_to_zero() {
        let sets: Vec<ContrastSet> = (0..3).map(|m| set(&format!("m{m}"), 2, 4, |_, _| 0.0)).collect();
        let (x, y) = build_design(&sets, DesignEncoding::Default).unwrap();
        let fit = fit_pointwise_ols(&x, &y).unwrap();
        assert!(fit.coefficients.iter().all(|&v| v == 0.0));
        assert!(fit.sigma2.as_ref().unwrap().iter().all(|&v| v == 0.0));
        // Zero numerator and zero variance give a zero statistic.
        let spec = HypothesisSpec::select(4, 0).unwrap();
        assert!(t_statistic(&fit, &spec).unwrap()[0].iter().all(|&t| t == 0.0));
    }

    #[test]
    fn single_model_has_no_variance() {
        let (x, y) = build_design(&[set("m", 2, 4, |x, _| x[0])], DesignEncoding::Default).unwrap();
        let fit = fit_pointwise_ols(&x, &y).unwrap();
        assert!(fit.sigma2.is_none());
        let spec = HypothesisSpec::select(4, 0).unwrap();
        assert!(matches!(t_statistic(&fit, &spec), Err(FanovaError::VarianceUndefined { .. })));
    }

    #[test]
    fn noiseless_signal_gives_infinite_statistic() {
        let sets: Vec<ContrastSet> =
            (0..3).map(|m| set(&format!("m{m}"), 1, 3, |x, _| 2.0 * x[0])).collect();
        let (x, y) = build_design(&sets, DesignEncoding::Default).unwrap();
        let mut fit = fit_pointwise_ols(&x, &y).unwrap();
        fit.sigma2 = Some(vec![0.0; 3]);
        let t = t_statistic(&fit, &HypothesisSpec::select(2, 0).unwrap()).unwrap();
        assert!(t[0].iter().all(|&v| v == f64::INFINITY));
    }

    #[test]
    fn singular_designs_and_bad_hypotheses() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let rows = (0..3)
            .map(|i| RowMeta { model_id: format!("r{i}"), kind: ContrastKind::FirstOrder, input: None })
            .collect();
        let design = DesignMatrix::new(vec!["a".into()], x, rows).unwrap();
        let y = ResponseMatrix { grid: grid(2), values: DMatrix::zeros(3, 2) };
        assert!(matches!(fit_pointwise_ols(&design, &y), Err(FanovaError::SingularDesign { .. })));

        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(HypothesisSpec::new(dup, None).is_err());
        assert!(HypothesisSpec::select(4, 4).is_err());
    }
}
