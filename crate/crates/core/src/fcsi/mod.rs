//! Functional finite-change sensitivity indices.
//!
//! For each input `i` and every grid point `t`:
//!
//! * first order `phi1_i(t) = f(only:i, t) - f(base, t)`,
//! * total order `phiT_i(t) = f(full, t) - f(except:i, t)`,
//! * interaction `phiI_i(t) = phiT_i(t) - phi1_i(t)`,
//!
//! and the normalized variants divide by `dy(t) = f(full, t) - f(base, t)`.
//! [`decomposition`] holds the full orthogonal expansion used to check the
//! two-run shortcuts.

pub mod decomposition;

pub use decomposition::{
    check_sum, full_decomposition, CornerTable, DecompositionTable, DiscreteProductMeasure,
    MAX_INPUTS,
};

use thiserror::Error;

use crate::design::ContrastSet;
use crate::spline::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcsiError {
    #[error("indices are defined on different grids")]
    GridMismatch,

    #[error("indices cover different inputs")]
    FactorMismatch,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("normalization threshold must be finite and nonnegative, got {0}")]
    InvalidEpsilon(f64),

    #[error("full decomposition supports at most {max} inputs, got {p}")]
    TooManyInputs { p: usize, max: usize },

    #[error("corner {0:?} is missing from the corner table")]
    MissingCorner(Vec<usize>),

    #[error("invalid product measure: {0}")]
    InvalidMeasure(String),
}

/// One functional index per input over a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalIndex {
    pub grid: TimeGrid,
    pub factors: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl FunctionalIndex {
    pub fn get(&self, factor: &str) -> Option<&[f64]> {
        let i = self.factors.iter().position(|f| f == factor)?;
        Some(&self.values[i])
    }
}

pub fn first_order_index(contrasts: &ContrastSet) -> FunctionalIndex {
    FunctionalIndex {
        grid: contrasts.grid.clone(),
        factors: contrasts.factors.clone(),
        values: contrasts.first_order.clone(),
    }
}

pub fn total_order_index(contrasts: &ContrastSet) -> FunctionalIndex {
    FunctionalIndex {
        grid: contrasts.grid.clone(),
        factors: contrasts.factors.clone(),
        values: contrasts.total_order.clone(),
    }
}

pub fn interaction_index(
    phi1: &FunctionalIndex,
    phi_t: &FunctionalIndex,
) -> Result<FunctionalIndex, FcsiError> {
    if phi1.grid != phi_t.grid {
        return Err(FcsiError::GridMismatch);
    }
    if phi1.factors != phi_t.factors {
        return Err(FcsiError::FactorMismatch);
    }
    let values = phi_t
        .values
        .iter()
        .zip(&phi1.values)
        .map(|(t, f)| t.iter().zip(f).map(|(a, b)| a - b).collect())
        .collect();
    Ok(FunctionalIndex { grid: phi1.grid.clone(), factors: phi1.factors.clone(), values })
}

/// All indices of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityIndexSet {
    pub model_id: String,
    pub grid: TimeGrid,
    pub factors: Vec<String>,
    pub phi1: Vec<Vec<f64>>,
    pub phi_t: Vec<Vec<f64>>,
    pub phi_i: Vec<Vec<f64>>,
    pub total_delta: Vec<f64>,
}

pub fn compute_indices(contrasts: &ContrastSet) -> SensitivityIndexSet {
    let phi1 = first_order_index(contrasts);
    let phi_t = total_order_index(contrasts);
    let phi_i = interaction_index(&phi1, &phi_t).expect("indices share one contrast set");
    SensitivityIndexSet {
        model_id: contrasts.model_id.clone(),
        grid: contrasts.grid.clone(),
        factors: contrasts.factors.clone(),
        phi1: phi1.values,
        phi_t: phi_t.values,
        phi_i: phi_i.values,
        total_delta: contrasts.total_delta.clone(),
    }
}

/// Index divided by the total change; `mask[k]` is false where the ratio is
/// undefined, and the stored value there is NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIndex {
    pub grid: TimeGrid,
    pub factors: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

/// `1e-8 * max |dy|`.
pub fn default_epsilon(total_delta: &[f64]) -> f64 {
    1e-8 * total_delta.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn normalization_mask(total_delta: &[f64], epsilon: f64) -> Vec<bool> {
    total_delta.iter().map(|d| d.abs() >= epsilon && *d != 0.0).collect()
}

fn divide(values: &[Vec<f64>], total_delta: &[f64], mask: &[bool]) -> Vec<Vec<f64>> {
    values
        .iter()
        .map(|v| {
            v.iter()
                .zip(total_delta)
                .zip(mask)
                .map(|((x, d), &ok)| if ok { x / d } else { f64::NAN })
                .collect()
        })
        .collect()
}

/// Divides by `total_delta` wherever `|total_delta| >= epsilon` (and is
/// nonzero); other points are masked.
pub fn normalize(
    index: &FunctionalIndex,
    total_delta: &[f64],
    epsilon: f64,
) -> Result<NormalizedIndex, FcsiError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(FcsiError::InvalidEpsilon(epsilon));
    }
    if total_delta.len() != index.grid.len() {
        return Err(FcsiError::LengthMismatch {
            expected: index.grid.len(),
            found: total_delta.len(),
        });
    }
    let mask = normalization_mask(total_delta, epsilon);
    Ok(NormalizedIndex {
        grid: index.grid.clone(),
        factors: index.factors.clone(),
        values: divide(&index.values, total_delta, &mask),
        mask,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIndexSet {
    pub model_id: String,
    pub grid: TimeGrid,
    pub factors: Vec<String>,
    pub phi1: Vec<Vec<f64>>,
    pub phi_t: Vec<Vec<f64>>,
    pub phi_i: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

/// Normalizes all three indices; `epsilon` defaults to [`default_epsilon`].
pub fn normalize_set(
    set: &SensitivityIndexSet,
    epsilon: Option<f64>,
) -> Result<NormalizedIndexSet, FcsiError> {
    let epsilon = epsilon.unwrap_or_else(|| default_epsilon(&set.total_delta));
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(FcsiError::InvalidEpsilon(epsilon));
    }
    let mask = normalization_mask(&set.total_delta, epsilon);
    Ok(NormalizedIndexSet {
        model_id: set.model_id.clone(),
        grid: set.grid.clone(),
        factors: set.factors.clone(),
        phi1: divide(&set.phi1, &set.total_delta, &mask),
        phi_t: divide(&set.phi_t, &set.total_delta, &mask),
        phi_i: divide(&set.phi_i, &set.total_delta, &mask),
        mask,
    })
}
