//! The one-reference/one-shift finite-change design.
//!
//! With `p` inputs the design has `2(p + 1)` runs: the reference state
//! (`base`), the fully shifted state (`full`), one run per input with only
//! that input shifted (`only:<factor>`), and one run per input with every
//! input but that one shifted (`except:<factor>`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::spline::{Domain, FunctionalSample, SplineError, TimeGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("a design needs at least one input factor")]
    NoFactors,

    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),

    #[error("invalid factor name `{0}`: names must be non-empty and free of ':' and ','")]
    InvalidFactorName(String),

    #[error("factor `{0}` has identical reference and shifted levels")]
    IdenticalLevels(String),

    #[error("unknown run label `{label}`; allowed labels are base, full, only:<factor>, except:<factor> with factor in [{allowed}]")]
    UnknownLabel { label: String, allowed: String },

    #[error("incomplete design: {}", describe_missing(.model, .label))]
    IncompleteDesign { model: Option<String>, label: Option<String> },

    #[error("duplicate run for model `{model}`, label `{label}`")]
    DuplicateRun { model: String, label: String },

    #[error("run `{label}` of model `{model}` is defined on [{found_start}, {found_end}] but the design uses [{start}, {end}]")]
    DomainMismatch {
        model: String,
        label: String,
        start: f64,
        end: f64,
        found_start: f64,
        found_end: f64,
    },

    #[error("evaluation grid [{first}, {last}] is not inside the curve domain [{start}, {end}]")]
    GridOutsideDomain { first: f64, last: f64, start: f64, end: f64 },

    #[error(transparent)]
    Spline(#[from] SplineError),
}

fn describe_missing(model: &Option<String>, label: &Option<String>) -> String {
    match (model, label) {
        (Some(m), Some(l)) => format!("model `{m}` has no `{l}` run"),
        (Some(m), None) => format!("model `{m}` has no runs"),
        _ => "no runs supplied".to_string(),
    }
}

/// Label of one run in the finite-change design.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RunLabel {
    Base,
    Full,
    Only(String),
    Except(String),
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunLabel::Base => f.write_str("base"),
            RunLabel::Full => f.write_str("full"),
            RunLabel::Only(x) => write!(f, "only:{x}"),
            RunLabel::Except(x) => write!(f, "except:{x}"),
        }
    }
}

impl FromStr for RunLabel {
    type Err = DesignError;

    /// Parses the label grammar only; membership in a concrete plan is
    /// checked by [`ExperimentPlan::contains`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || DesignError::UnknownLabel { label: s.to_string(), allowed: String::new() };
        match s {
            "base" => Ok(RunLabel::Base),
            "full" => Ok(RunLabel::Full),
            _ => {
                let (kind, factor) = s.split_once(':').ok_or_else(unknown)?;
                if !valid_name(factor) {
                    return Err(unknown());
                }
                match kind {
                    "only" => Ok(RunLabel::Only(factor.to_string())),
                    "except" => Ok(RunLabel::Except(factor.to_string())),
                    _ => Err(unknown()),
                }
            }
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.contains([':', ',']) && name.trim() == name
}

/// An input with its reference and shifted levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFactor {
    pub name: String,
    pub reference_level: String,
    pub shifted_level: String,
}

impl InputFactor {
    pub fn new(
        name: impl Into<String>,
        reference_level: impl Into<String>,
        shifted_level: impl Into<String>,
    ) -> Result<Self, DesignError> {
        let name = name.into();
        let reference_level = reference_level.into();
        let shifted_level = shifted_level.into();
        if !valid_name(&name) {
            return Err(DesignError::InvalidFactorName(name));
        }
        if reference_level == shifted_level {
            return Err(DesignError::IdenticalLevels(name));
        }
        Ok(Self { name, reference_level, shifted_level })
    }

    /// Factor with generic `reference`/`shifted` level names.
    pub fn named(name: impl Into<String>) -> Result<Self, DesignError> {
        Self::new(name, "reference", "shifted")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    factors: Vec<InputFactor>,
    run_labels: Vec<RunLabel>,
}

/// Lays out the `2(p + 1)` runs in the order `base, full, only:*, except:*`.
pub fn build_plan(factors: Vec<InputFactor>) -> Result<ExperimentPlan, DesignError> {
    if factors.is_empty() {
        return Err(DesignError::NoFactors);
    }
    let mut seen = HashSet::new();
    for f in &factors {
        if !seen.insert(f.name.as_str()) {
            return Err(DesignError::DuplicateFactor(f.name.clone()));
        }
    }
    let mut run_labels = vec![RunLabel::Base, RunLabel::Full];
    run_labels.extend(factors.iter().map(|f| RunLabel::Only(f.name.clone())));
    run_labels.extend(factors.iter().map(|f| RunLabel::Except(f.name.clone())));
    Ok(ExperimentPlan { factors, run_labels })
}

impl ExperimentPlan {
    pub fn factors(&self) -> &[InputFactor] {
        &self.factors
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn run_labels(&self) -> &[RunLabel] {
        &self.run_labels
    }

    pub fn contains(&self, label: &RunLabel) -> bool {
        self.run_labels.contains(label)
    }

    /// Parses `s` and checks it against this plan's vocabulary.
    pub fn parse_label(&self, s: &str) -> Result<RunLabel, DesignError> {
        let unknown = || DesignError::UnknownLabel {
            label: s.to_string(),
            allowed: self.factor_names().join(", "),
        };
        let label = s.parse::<RunLabel>().map_err(|_| unknown())?;
        if self.contains(&label) {
            Ok(label)
        } else {
            Err(unknown())
        }
    }

    /// Which inputs sit at their shifted level in the given run.
    pub fn shift_pattern(&self, label: &RunLabel) -> Option<Vec<bool>> {
        if !self.contains(label) {
            return None;
        }
        Some(
            self.factors
                .iter()
                .map(|f| match label {
                    RunLabel::Base => false,
                    RunLabel::Full => true,
                    RunLabel::Only(x) => *x == f.name,
                    RunLabel::Except(x) => *x != f.name,
                })
                .collect(),
        )
    }

    /// Level name of every input in the given run.
    pub fn assignment(&self, label: &RunLabel) -> Option<Vec<&str>> {
        let pattern = self.shift_pattern(label)?;
        Some(
            self.factors
                .iter()
                .zip(pattern)
                .map(|(f, shifted)| {
                    if shifted {
                        f.shifted_level.as_str()
                    } else {
                        f.reference_level.as_str()
                    }
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub model_id: String,
    pub run_label: RunLabel,
    pub curve: FunctionalSample,
}

/// All runs of one model, one curve per plan label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRuns {
    pub model_id: String,
    pub curves: BTreeMap<RunLabel, FunctionalSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedRuns {
    plan: ExperimentPlan,
    domain: Domain,
    models: Vec<ModelRuns>,
}

impl ValidatedRuns {
    pub fn plan(&self) -> &ExperimentPlan {
        &self.plan
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Models in order of first appearance.
    pub fn models(&self) -> &[ModelRuns] {
        &self.models
    }
}

/// Groups runs by model and checks that every model has exactly one run per
/// plan label on a shared domain.
pub fn validate_runs(
    plan: &ExperimentPlan,
    runs: Vec<RunRecord>,
) -> Result<ValidatedRuns, DesignError> {
    let Some(first) = runs.first() else {
        return Err(DesignError::IncompleteDesign { model: None, label: None });
    };
    let domain = first.curve.domain();
    let mut models: Vec<ModelRuns> = Vec::new();
    for run in runs {
        if !plan.contains(&run.run_label) {
            return Err(DesignError::UnknownLabel {
                label: run.run_label.to_string(),
                allowed: plan.factor_names().join(", "),
            });
        }
        let d = run.curve.domain();
        if d != domain {
            return Err(DesignError::DomainMismatch {
                model: run.model_id,
                label: run.run_label.to_string(),
                start: domain.start(),
                end: domain.end(),
                found_start: d.start(),
                found_end: d.end(),
            });
        }
        let idx = match models.iter().position(|m| m.model_id == run.model_id) {
            Some(i) => i,
            None => {
                models.push(ModelRuns { model_id: run.model_id.clone(), curves: BTreeMap::new() });
                models.len() - 1
            }
        };
        let entry = &mut models[idx];
        if entry.curves.contains_key(&run.run_label) {
            return Err(DesignError::DuplicateRun {
                model: run.model_id,
                label: run.run_label.to_string(),
            });
        }
        entry.curves.insert(run.run_label, run.curve);
    }
    for m in &models {
        if let Some(missing) = plan.run_labels().iter().find(|l| !m.curves.contains_key(l)) {
            return Err(DesignError::IncompleteDesign {
                model: Some(m.model_id.clone()),
                label: Some(missing.to_string()),
            });
        }
    }
    Ok(ValidatedRuns { plan: plan.clone(), domain, models })
}

/// Functional contrasts of one model, evaluated on a shared grid.
///
/// `first_order[i] = only:i - base`, `total_order[i] = full - except:i`,
/// `total_delta = full - base`; vectors follow the order of `factors`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSet {
    pub model_id: String,
    pub grid: TimeGrid,
    pub factors: Vec<String>,
    pub first_order: Vec<Vec<f64>>,
    pub total_order: Vec<Vec<f64>>,
    pub total_delta: Vec<f64>,
}

impl ContrastSet {
    /// Builds contrasts from run outputs already evaluated on `grid`.
    /// `values` must hold every label of the plan over `factors`.
    pub fn from_values(
        model_id: impl Into<String>,
        grid: TimeGrid,
        factors: Vec<String>,
        values: &BTreeMap<RunLabel, Vec<f64>>,
    ) -> Result<Self, DesignError> {
        let model_id = model_id.into();
        let get = |label: RunLabel| -> Result<&Vec<f64>, DesignError> {
            let v = values.get(&label).ok_or_else(|| DesignError::IncompleteDesign {
                model: Some(model_id.clone()),
                label: Some(label.to_string()),
            })?;
            if v.len() != grid.len() {
                return Err(SplineError::LengthMismatch { expected: grid.len(), found: v.len() }
                    .into());
            }
            Ok(v)
        };
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let base = get(RunLabel::Base)?;
        let full = get(RunLabel::Full)?;
        let mut first_order = Vec::with_capacity(factors.len());
        let mut total_order = Vec::with_capacity(factors.len());
        for f in &factors {
            first_order.push(diff(get(RunLabel::Only(f.clone()))?, base));
            total_order.push(diff(full, get(RunLabel::Except(f.clone()))?));
        }
        let total_delta = diff(full, base);
        Ok(Self { model_id, grid, factors, first_order, total_order, total_delta })
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    /// Number of contrast curves, `2p + 1`.
    pub fn len(&self) -> usize {
        2 * self.factors.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Evaluates every curve on `grid` and forms the `2p + 1` contrasts per model.
pub fn compute_contrasts(
    runs: &ValidatedRuns,
    grid: &TimeGrid,
) -> Result<Vec<ContrastSet>, DesignError> {
    let domain = runs.domain();
    if !grid.within(&domain) {
        return Err(DesignError::GridOutsideDomain {
            first: grid.first(),
            last: grid.last(),
            start: domain.start(),
            end: domain.end(),
        });
    }
    let factors = runs.plan().factor_names();
    runs.models()
        .par_iter()
        .map(|m| {
            let values = m
                .curves
                .iter()
                .map(|(label, curve)| Ok((label.clone(), curve.eval_grid(grid)?)))
                .collect::<Result<BTreeMap<_, _>, SplineError>>()?;
            ContrastSet::from_values(m.model_id.clone(), grid.clone(), factors.clone(), &values)
        })
        .collect()
}
