//! Synthetic ensembles with known sensitivity structure.
//!
//! Each model evaluates `y(x, t) = sum_i g_i(t) x_i + sum_{i<j} h_ij(t) x_i x_j + e`
//! at reference `x = 0` and shifted `x = 1` levels, so the indices are known
//! in closed form.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::design::{
    build_plan, ContrastSet, DesignError, ExperimentPlan, InputFactor, RunLabel, RunRecord,
};
use crate::fcsi::{CornerTable, FcsiError, SensitivityIndexSet};
use crate::iwt::mix;
use crate::spline::{fit, SplineBasis, SplineError, TimeGrid};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic model: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Design(#[from] DesignError),

    #[error(transparent)]
    Spline(#[from] SplineError),

    #[error(transparent)]
    Fcsi(#[from] FcsiError),

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Polynomial in `(t - origin) / scale`, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coefficients: Vec<f64>,
    origin: f64,
    scale: f64,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients, origin: 0.0, scale: 1.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn zero() -> Self {
        Self::new(Vec::new())
    }

    pub fn rescaled(mut self, origin: f64, scale: f64) -> Self {
        self.origin = origin;
        self.scale = scale;
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = (t - self.origin) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn is_valid(&self) -> bool {
        self.scale.is_finite()
            && self.scale != 0.0
            && self.origin.is_finite()
            && self.coefficients.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseModel {
    /// Independent draws at every grid point.
    #[default]
    Iid,
    /// Stationary AR(1) along the grid with marginal sd `noise_sd`.
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModelSpec {
    pub factors: Vec<String>,
    pub main_effects: Vec<Polynomial>,
    /// Keyed by `(i, j)` with `i < j`.
    pub interactions: BTreeMap<(usize, usize), Polynomial>,
    pub noise_sd: f64,
    pub noise: NoiseModel,
    pub n_models: usize,
}

impl SyntheticModelSpec {
    /// Additive, noiseless, single-model spec; factors are named `x1 .. xp`.
    pub fn additive(main_effects: Vec<Polynomial>) -> Self {
        let factors = (1..=main_effects.len()).map(|i| format!("x{i}")).collect();
        Self {
            factors,
            main_effects,
            interactions: BTreeMap::new(),
            noise_sd: 0.0,
            noise: NoiseModel::Iid,
            n_models: 1,
        }
    }

    /// Five inputs with smooth trends and two interactions over `[start, end]`.
    pub fn demo(start: f64, end: f64, n_models: usize, noise_sd: f64) -> Self {
        let width = end - start;
        let main = (0..5)
            .map(|i| {
                let a = (i + 1) as f64;
                Polynomial::new(vec![0.2 * a, a, -0.3 * a * a / 5.0]).rescaled(start, width)
            })
            .collect();
        let mut spec = Self::additive(main)
            .with_interaction(0, 1, Polynomial::new(vec![0.0, 0.0, 0.8]).rescaled(start, width))
            .with_interaction(2, 4, Polynomial::new(vec![-0.1, 0.5]).rescaled(start, width))
            .with_noise(noise_sd)
            .with_models(n_models);
        spec.factors = ["pop", "gdp", "energy", "land", "fossil"].map(String::from).to_vec();
        spec
    }

    pub fn with_interaction(mut self, i: usize, j: usize, h: Polynomial) -> Self {
        self.interactions.insert((i.min(j), i.max(j)), h);
        self
    }

    pub fn with_noise(mut self, noise_sd: f64) -> Self {
        self.noise_sd = noise_sd;
        self
    }

    pub fn with_ar1(mut self, rho: f64) -> Self {
        self.noise = NoiseModel::Ar1 { rho };
        self
    }

    pub fn with_models(mut self, n_models: usize) -> Self {
        self.n_models = n_models;
        self
    }

    pub fn with_factor_names(mut self, names: Vec<String>) -> Self {
        self.factors = names;
        self
    }

    pub fn n_inputs(&self) -> usize {
        self.factors.len()
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let p = self.n_inputs();
        let bad = |m: String| Err(SyntheticError::InvalidSpec(m));
        if p == 0 {
            return bad("at least one input is required".into());
        }
        if self.main_effects.len() != p {
            return bad(format!("{} effect functions for {p} inputs", self.main_effects.len()));
        }
        if let Some(&(i, j)) = self.interactions.keys().find(|&&(i, j)| i == j || j >= p) {
            return bad(format!("interaction ({i}, {j}) is not a pair of distinct inputs"));
        }
        if !self.main_effects.iter().chain(self.interactions.values()).all(Polynomial::is_valid) {
            return bad("effect functions must be finite".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd {} must be finite and non-negative", self.noise_sd));
        }
        if let NoiseModel::Ar1 { rho } = self.noise {
            if !(rho > -1.0 && rho < 1.0) {
                return bad(format!("AR(1) coefficient {rho} must lie in (-1, 1)"));
            }
        }
        if self.n_models == 0 {
            return bad("at least one model is required".into());
        }
        Ok(())
    }

    /// Noise-free response at input levels `x`.
    pub fn response(&self, x: &[f64], t: f64) -> f64 {
        let main: f64 = self.main_effects.iter().zip(x).map(|(g, xi)| g.eval(t) * xi).sum();
        let inter: f64 =
            self.interactions.iter().map(|(&(i, j), h)| h.eval(t) * x[i] * x[j]).sum();
        main + inter
    }

    /// Noise-free outputs at every 0/1 corner.
    pub fn corner_table(&self, grid: &TimeGrid) -> Result<CornerTable, SyntheticError> {
        let table = CornerTable::from_fn(vec![2; self.n_inputs()], |c| {
            let x: Vec<f64> = c.iter().map(|&l| l as f64).collect();
            grid.points().iter().map(|&t| self.response(&x, t)).collect()
        })?;
        Ok(table)
    }

    pub fn ground_truth(&self, grid: &TimeGrid) -> SensitivityIndexSet {
        let p = self.n_inputs();
        let curve = |f: &dyn Fn(f64) -> f64| grid.points().iter().map(|&t| f(t)).collect::<Vec<_>>();
        let phi1: Vec<Vec<f64>> = self.main_effects.iter().map(|g| curve(&|t| g.eval(t))).collect();
        let phi_i: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                curve(&|t| {
                    self.interactions
                        .iter()
                        .filter(|((a, b), _)| *a == i || *b == i)
                        .map(|(_, h)| h.eval(t))
                        .sum()
                })
            })
            .collect();
        let phi_t = phi1
            .iter()
            .zip(&phi_i)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        SensitivityIndexSet {
            model_id: "truth".into(),
            grid: grid.clone(),
            factors: self.factors.clone(),
            phi1,
            phi_t,
            phi_i,
            total_delta: curve(&|t| self.response(&vec![1.0; p], t)),
        }
    }
}

/// One run observed on the generation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    pub model_id: String,
    pub run_label: RunLabel,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticEnsemble {
    pub spec: SyntheticModelSpec,
    pub grid: TimeGrid,
    pub plan: ExperimentPlan,
    /// Grouped by model, plan label order within each model.
    pub runs: Vec<RawRun>,
    pub truth: SensitivityIndexSet,
}

pub fn model_id(index: usize) -> String {
    format!("model{:02}", index + 1)
}

pub fn generate_ensemble(
    spec: &SyntheticModelSpec,
    grid: &TimeGrid,
    seed: u64,
) -> Result<SyntheticEnsemble, SyntheticError> {
    spec.validate()?;
    let factors = spec
        .factors
        .iter()
        .map(|f| InputFactor::named(f.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let plan = build_plan(factors)?;
    let per_model: Vec<Vec<RawRun>> = (0..spec.n_models)
        .into_par_iter()
        .map(|m| model_runs(spec, &plan, grid, m, mix(seed ^ mix(m as u64))))
        .collect();
    Ok(SyntheticEnsemble {
        spec: spec.clone(),
        grid: grid.clone(),
        plan,
        runs: per_model.into_iter().flatten().collect(),
        truth: spec.ground_truth(grid),
    })
}

fn model_runs(
    spec: &SyntheticModelSpec,
    plan: &ExperimentPlan,
    grid: &TimeGrid,
    model: usize,
    seed: u64,
) -> Vec<RawRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = model_id(model);
    plan.run_labels()
        .iter()
        .map(|label| {
            let x: Vec<f64> = plan
                .shift_pattern(label)
                .expect("label from plan")
                .into_iter()
                .map(|s| if s { 1.0 } else { 0.0 })
                .collect();
            let noise = draw_noise(spec, grid.len(), &mut rng);
            let values = grid
                .points()
                .iter()
                .zip(noise)
                .map(|(&t, e)| spec.response(&x, t) + e)
                .collect();
            RawRun { model_id: id.clone(), run_label: label.clone(), values }
        })
        .collect()
}

fn draw_noise(spec: &SyntheticModelSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if spec.noise_sd == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, spec.noise_sd).expect("validated sd");
    match spec.noise {
        NoiseModel::Iid => (0..n).map(|_| normal.sample(rng)).collect(),
        NoiseModel::Ar1 { rho } => {
            let innovation = (1.0 - rho * rho).sqrt();
            let mut prev = normal.sample(rng);
            let mut out = vec![prev];
            for _ in 1..n {
                prev = rho * prev + innovation * normal.sample(rng);
                out.push(prev);
            }
            out
        }
    }
}

impl SyntheticEnsemble {
    /// Runs smoothed with a fixed penalty.
    pub fn run_records(
        &self,
        basis: &SplineBasis,
        lambda: f64,
    ) -> Result<Vec<RunRecord>, SyntheticError> {
        self.runs
            .iter()
            .map(|r| {
                let (curve, _) = fit(&self.grid, &r.values, basis, lambda)?;
                Ok(RunRecord { model_id: r.model_id.clone(), run_label: r.run_label.clone(), curve })
            })
            .collect()
    }

    /// Contrasts of the raw values on the generation grid, without smoothing.
    pub fn raw_contrasts(&self) -> Result<Vec<ContrastSet>, SyntheticError> {
        let mut by_model: BTreeMap<&str, BTreeMap<RunLabel, Vec<f64>>> = BTreeMap::new();
        for r in &self.runs {
            by_model.entry(&r.model_id).or_default().insert(r.run_label.clone(), r.values.clone());
        }
        by_model
            .into_iter()
            .map(|(id, values)| {
                Ok(ContrastSet::from_values(
                    id,
                    self.grid.clone(),
                    self.spec.factors.clone(),
                    &values,
                )?)
            })
            .collect()
    }

    /// Long-format `model,run_label,t,value` table.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SyntheticError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "run_label", "t", "value"])?;
        for r in &self.runs {
            let label = r.run_label.to_string();
            for (t, v) in self.grid.points().iter().zip(&r.values) {
                w.write_record([r.model_id.as_str(), label.as_str(), &t.to_string(), &v.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcsi::{compute_indices, full_decomposition, DiscreteProductMeasure};

    fn grid() -> TimeGrid {
        TimeGrid::new((0..9).map(|k| k as f64 / 8.0).collect()).unwrap()
    }

    #[test]
    fn bilinear_truth() {
        let spec = SyntheticModelSpec::additive(vec![Polynomial::constant(2.0), Polynomial::constant(3.0)])
            .with_interaction(0, 1, Polynomial::new(vec![0.0, 1.0]));
        let ens = generate_ensemble(&spec, &grid(), 1).unwrap();
        assert_eq!(ens.runs.len(), 6);
        let idx = compute_indices(&ens.raw_contrasts().unwrap()[0]);
        for (k, &t) in grid().points().iter().enumerate() {
            assert_eq!(idx.phi1[0][k], 2.0);
            assert!((idx.phi_t[1][k] - (3.0 + t)).abs() < 1e-12);
            assert!((idx.total_delta[k] - (5.0 + t)).abs() < 1e-12);
            assert!((ens.truth.phi_i[0][k] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn corners_decompose_into_effects() {
        let spec = SyntheticModelSpec::demo(0.0, 1.0, 1, 0.0);
        let g = grid();
        let table = full_decomposition(&spec.corner_table(&g).unwrap(), &DiscreteProductMeasure::dirac(5, 0.0, 1.0))
            .unwrap();
        let top = [1; 5];
        for (k, &t) in g.points().iter().enumerate() {
            for i in 0..5 {
                let term = table.term(1 << i, &top)[k];
                assert!((term - spec.main_effects[i].eval(t)).abs() < 1e-10);
            }
            assert!((table.term(0b00011, &top)[k] - spec.interactions[&(0, 1)].eval(t)).abs() < 1e-10);
            assert!(table.term(0b00110, &top)[k].abs() < 1e-10);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let spec = SyntheticModelSpec::demo(0.0, 1.0, 3, 0.5).with_ar1(0.6);
        let a = generate_ensemble(&spec, &grid(), 42).unwrap();
        let b = generate_ensemble(&spec, &grid(), 42).unwrap();
        let c = generate_ensemble(&spec, &grid(), 43).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_ne!(a.runs, c.runs);
        assert_eq!(a.runs.len(), 36);
    }

    #[test]
    fn invalid_specs() {
        let base = SyntheticModelSpec::additive(vec![Polynomial::zero(); 2]);
        assert!(base.clone().with_noise(-1.0).validate().is_err());
        assert!(base.clone().with_ar1(1.0).validate().is_err());
        assert!(base.clone().with_models(0).validate().is_err());
        assert!(base.clone().with_interaction(1, 1, Polynomial::zero()).validate().is_err());
        assert!(base.with_interaction(0, 3, Polynomial::zero()).validate().is_err());
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let spec = SyntheticModelSpec::additive(vec![Polynomial::constant(1.0)]);
        let ens = generate_ensemble(&spec, &grid(), 0).unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,run_label,t,value\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 9);
    }
}
