//! Smooth, contrast, index, regress and test, then write the report files.

use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::design::{
    build_plan, compute_contrasts, validate_runs, DesignError, ExperimentPlan, InputFactor,
    RunLabel, RunRecord,
};
use crate::fanova::{build_design, fit_pointwise_ols, FanovaError, FanovaFit, HypothesisSpec};
use crate::fcsi::{compute_indices, normalize_set, FcsiError, NormalizedIndexSet, SensitivityIndexSet};
use crate::io::svg::{self, Band, Panel, Series};
use crate::io::{format_value, AnalysisConfig, CsvSink, IoError, LambdaChoice, RawRunTable};
use crate::iwt::{
    permutation_distribution, significant_intervals, IwtError, PValueFunction, PermutationConfig,
    SignificantIntervals,
};
use crate::spline::{fit, select_lambda, Domain, SmoothingReport, SplineBasis, SplineError, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Smooth,
    Indices,
    Fanova,
    Test,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Smooth => "smooth",
            Stage::Indices => "indices",
            Stage::Fanova => "fanova",
            Stage::Test => "test",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Fcsi(#[from] FcsiError),
    #[error(transparent)]
    Fanova(#[from] FanovaError),
    #[error(transparent)]
    Iwt(#[from] IwtError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
}

/// Whether a failure came from the inputs or from the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
}

impl PipelineError {
    fn at(stage: &'static str) -> impl Fn(StageError) -> PipelineError {
        move |source| PipelineError { stage, source }
    }

    pub fn kind(&self) -> ErrorKind {
        let spline_kind = |e: &SplineError| match e {
            SplineError::SingularFit { .. }
            | SplineError::UndefinedScore { .. }
            | SplineError::NoValidLambda => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        let fanova_kind = |e: &FanovaError| match e {
            FanovaError::SingularDesign { .. } | FanovaError::VarianceUndefined { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        match &self.source {
            StageError::Io(_) | StageError::Input(_) | StageError::Fcsi(_) => ErrorKind::Input,
            StageError::Spline(e) | StageError::Design(DesignError::Spline(e)) => spline_kind(e),
            StageError::Design(_) => ErrorKind::Input,
            StageError::Fanova(e) | StageError::Iwt(IwtError::Fanova(e)) => fanova_kind(e),
            StageError::Iwt(_) => ErrorKind::Input,
        }
    }
}

/// Smoothing outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingRow {
    pub model_id: String,
    pub run_label: RunLabel,
    pub report: SmoothingReport,
}

#[derive(Debug, Clone)]
pub struct SmoothedRuns {
    pub plan: Option<ExperimentPlan>,
    pub basis_domain: Option<Domain>,
    pub records: Vec<RunRecord>,
    pub reports: Vec<SmoothingRow>,
}

fn factor_names(table: &RawRunTable, config: &AnalysisConfig) -> Result<Vec<String>, StageError> {
    let found = table.factor_names();
    let Some(names) = &config.factors else {
        return Ok(found);
    };
    if let Some(bad) = found.iter().find(|f| !names.contains(f)) {
        return Err(StageError::Input(format!(
            "run labels mention input `{bad}`, which is not among the configured factors [{}]",
            names.join(", ")
        )));
    }
    Ok(names.clone())
}

/// Smooths every series of the table on a basis spanning all observations.
pub fn smooth_runs(table: &RawRunTable, config: &AnalysisConfig) -> Result<SmoothedRuns, PipelineError> {
    let at = PipelineError::at("smooth");
    let Some((lo, hi)) = table.time_range() else {
        return Ok(SmoothedRuns { plan: None, basis_domain: None, records: vec![], reports: vec![] });
    };
    let names = factor_names(table, config).map_err(&at)?;
    let factors = names
        .into_iter()
        .map(InputFactor::named)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| at(e.into()))?;
    let plan = build_plan(factors).map_err(|e| at(e.into()))?;
    let domain = Domain::new(lo, hi).map_err(|e| at(e.into()))?;
    let basis = SplineBasis::new(domain, config.n_basis, config.degree).map_err(|e| at(e.into()))?;
    let mut records = Vec::with_capacity(table.series.len());
    let mut reports = Vec::with_capacity(table.series.len());
    for s in &table.series {
        let grid = TimeGrid::new(s.t.clone()).map_err(|e| at(e.into()))?;
        let context = |e: SplineError| {
            at(StageError::Input(format!("model `{}`, run `{}`: {e}", s.model_id, s.run_label)))
        };
        let (curve, report) = match &config.lambda {
            LambdaChoice::Fixed(l) => fit(&grid, &s.values, &basis, *l),
            LambdaChoice::Gcv(c) => select_lambda(&grid, &s.values, &basis, c)
                .and_then(|(l, _)| fit(&grid, &s.values, &basis, l)),
        }
        .map_err(|e| match e {
            SplineError::SingularFit { .. } | SplineError::NoValidLambda => at(e.into()),
            other => context(other),
        })?;
        records.push(RunRecord { model_id: s.model_id.clone(), run_label: s.run_label.clone(), curve });
        reports.push(SmoothingRow { model_id: s.model_id.clone(), run_label: s.run_label.clone(), report });
    }
    info!("smoothed {} runs on [{lo}, {hi}]", records.len());
    Ok(SmoothedRuns { plan: Some(plan), basis_domain: Some(domain), records, reports })
}

/// One hypothesis `phi_j = 0` with its p-value functions.
#[derive(Debug, Clone)]
pub struct HypothesisTest {
    pub label: String,
    pub column: usize,
    pub pvalues: PValueFunction,
    pub significant: Vec<SignificantIntervals>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub config: AnalysisConfig,
    pub seed: Option<u64>,
    pub smoothed: SmoothedRuns,
    pub grid: Option<TimeGrid>,
    /// Smoothed run curves on the evaluation grid.
    pub curves: Vec<(String, RunLabel, Vec<f64>)>,
    pub indices: Vec<SensitivityIndexSet>,
    pub normalized: Vec<NormalizedIndexSet>,
    pub fanova: Option<FanovaFit>,
    pub tests: Vec<HypothesisTest>,
    pub warnings: Vec<String>,
}

fn evaluation_grid(config: &AnalysisConfig, basis_domain: Domain) -> Result<TimeGrid, StageError> {
    let domain = match config.domain {
        None => basis_domain,
        Some((a, b)) => {
            if a < basis_domain.start() || b > basis_domain.end() {
                return Err(StageError::Input(format!(
                    "analysis domain [{a}, {b}] is not inside the observed range [{}, {}]",
                    basis_domain.start(),
                    basis_domain.end()
                )));
            }
            Domain::new(a, b)?
        }
    };
    Ok(TimeGrid::uniform(domain, config.grid_step)?)
}

/// Runs every stage up to and including `through`.
pub fn run_pipeline(
    config: &AnalysisConfig,
    table: &RawRunTable,
    through: Stage,
    seed: Option<u64>,
) -> Result<PipelineOutput, PipelineError> {
    let seed = seed.or(config.seed);
    if through >= Stage::Test && seed.is_none() {
        return Err(PipelineError {
            stage: "test",
            source: StageError::Input("a seed is required for permutation testing".into()),
        });
    }
    let smoothed = smooth_runs(table, config)?;
    let mut out = PipelineOutput {
        config: config.clone(),
        seed,
        smoothed,
        grid: None,
        curves: vec![],
        indices: vec![],
        normalized: vec![],
        fanova: None,
        tests: vec![],
        warnings: vec![],
    };
    let (Some(plan), Some(basis_domain)) = (out.smoothed.plan.clone(), out.smoothed.basis_domain) else {
        note(&mut out.warnings, "no runs in the input; nothing to analyze".into());
        return Ok(out);
    };
    let at = PipelineError::at("contrasts");
    let grid = evaluation_grid(config, basis_domain).map_err(&at)?;
    out.curves = out
        .smoothed
        .records
        .iter()
        .map(|r| Ok((r.model_id.clone(), r.run_label.clone(), r.curve.eval_grid(&grid)?)))
        .collect::<Result<_, SplineError>>()
        .map_err(|e| at(e.into()))?;
    out.grid = Some(grid.clone());
    if through < Stage::Indices {
        return Ok(out);
    }

    let runs = validate_runs(&plan, out.smoothed.records.clone()).map_err(|e| at(e.into()))?;
    let contrasts = compute_contrasts(&runs, &grid).map_err(|e| at(e.into()))?;
    let at = PipelineError::at("indices");
    out.indices = contrasts.iter().map(compute_indices).collect();
    out.normalized = out
        .indices
        .iter()
        .map(|s| {
            let max_dy = s.total_delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            normalize_set(s, Some(config.epsilon_rel * max_dy))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| at(e.into()))?;
    if through < Stage::Fanova {
        return Ok(out);
    }

    if contrasts.len() < 2 {
        note(
            &mut out.warnings,
            format!("only {} model supplied; cross-model regression and tests skipped", contrasts.len()),
        );
        return Ok(out);
    }
    let at = PipelineError::at("fanova");
    let (design, responses) = build_design(&contrasts, config.encoding).map_err(|e| at(e.into()))?;
    let fit = fit_pointwise_ols(&design, &responses).map_err(|e| at(e.into()))?;
    if through >= Stage::Test {
        let at = PipelineError::at("test");
        let seed = seed.expect("checked above");
        let perm = PermutationConfig::new(config.permutations, seed)
            .map_err(|e| at(e.into()))?
            .with_scheme(config.scheme);
        for (column, label) in design.column_names().into_iter().enumerate() {
            let spec = HypothesisSpec::select(design.n_coef(), column)
                .map_err(|e| at(e.into()))?
                .with_label(label.clone());
            let dist = permutation_distribution(&fit, &spec, &perm).map_err(|e| at(e.into()))?;
            let pvalues = PValueFunction::from_distribution(grid.clone(), label.clone(), &dist);
            let significant = config
                .alpha
                .iter()
                .map(|&a| significant_intervals(&pvalues, a))
                .collect::<Result<_, _>>()
                .map_err(|e| at(e.into()))?;
            out.tests.push(HypothesisTest { label, column, pvalues, significant });
        }
    }
    out.fanova = Some(fit);
    Ok(out)
}

fn note(warnings: &mut Vec<String>, message: String) {
    warn!("{message}");
    warnings.push(message);
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes every table the output holds, plus plots when `plots` is set.
/// Returns the files written, in a fixed order.
pub fn write_outputs(out: &PipelineOutput, dir: &Path, plots: bool) -> Result<Vec<PathBuf>, PipelineError> {
    let at = PipelineError::at("report");
    let io = |e: IoError| at(e.into());
    std::fs::create_dir_all(dir)
        .map_err(|source| io(IoError::Io { path: dir.to_path_buf(), source }))?;
    let mut files = Vec::new();

    let mut settings = out.config.clone();
    settings.seed = out.seed;
    let settings_path = dir.join("settings.txt");
    std::fs::write(&settings_path, settings.to_text())
        .map_err(|source| io(IoError::Io { path: settings_path.clone(), source }))?;
    files.push(settings_path);

    let mut sink = CsvSink::create(
        &dir.join("smoothing.csv"),
        &["model", "run_label", "lambda", "gcv", "hat_trace", "rss", "n_obs"],
    )
    .map_err(io)?;
    for r in &out.smoothed.reports {
        let gcv = r.report.gcv_score.map(format_value).unwrap_or_default();
        sink.row([
            r.model_id.clone(),
            r.run_label.to_string(),
            format_value(r.report.lambda),
            gcv,
            format_value(r.report.hat_trace),
            format_value(r.report.rss),
            r.report.n_obs.to_string(),
        ])
        .map_err(io)?;
    }
    files.push(sink.finish().map_err(io)?);

    let Some(grid) = &out.grid else {
        return Ok(files);
    };
    let mut sink = CsvSink::create(&dir.join("curves.csv"), &["model", "run_label", "t", "value"]).map_err(io)?;
    for (model, label, values) in &out.curves {
        let label = label.to_string();
        for (t, v) in grid.points().iter().zip(values) {
            sink.row([model.as_str(), label.as_str(), &format_value(*t), &format_value(*v)]).map_err(io)?;
        }
    }
    files.push(sink.finish().map_err(io)?);

    if !out.indices.is_empty() {
        files.push(crate::io::write_index_table(&dir.join("indices.csv"), &out.indices).map_err(io)?);
        files.push(
            crate::io::write_normalized_table(&dir.join("normalized.csv"), &out.normalized).map_err(io)?,
        );
    }

    if let Some(fit) = &out.fanova {
        let mut sink =
            CsvSink::create(&dir.join("coefficients.csv"), &["coefficient", "t", "value"]).map_err(io)?;
        for (j, name) in fit.design.column_names().iter().enumerate() {
            for (k, t) in grid.points().iter().enumerate() {
                sink.row([name.as_str(), &format_value(*t), &format_value(fit.coefficients[(j, k)])])
                    .map_err(io)?;
            }
        }
        if let Some(s2) = &fit.sigma2 {
            for (t, v) in grid.points().iter().zip(s2) {
                sink.row(["sigma2", &format_value(*t), &format_value(*v)]).map_err(io)?;
            }
        }
        files.push(sink.finish().map_err(io)?);
    }

    if !out.tests.is_empty() {
        let mut sink = CsvSink::create(&dir.join("pvalues.csv"), &["hypothesis", "t", "unadjusted", "adjusted"])
            .map_err(io)?;
        for test in &out.tests {
            for (k, t) in grid.points().iter().enumerate() {
                sink.row([
                    test.label.as_str(),
                    &format_value(*t),
                    &format_value(test.pvalues.unadjusted[k]),
                    &format_value(test.pvalues.adjusted[k]),
                ])
                .map_err(io)?;
            }
        }
        files.push(sink.finish().map_err(io)?);

        let mut sink = CsvSink::create(&dir.join("intervals.csv"), &["hypothesis", "alpha", "start", "end"])
            .map_err(io)?;
        for test in &out.tests {
            for sig in &test.significant {
                for iv in &sig.intervals {
                    sink.row([
                        test.label.as_str(),
                        &sig.alpha.to_string(),
                        &format_value(grid.points()[iv.start]),
                        &format_value(grid.points()[iv.end]),
                    ])
                    .map_err(io)?;
                }
            }
        }
        files.push(sink.finish().map_err(io)?);
    }

    if plots {
        files.extend(write_plots(out, grid, dir).map_err(io)?);
    }
    Ok(files)
}

fn write_plots(out: &PipelineOutput, grid: &TimeGrid, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let plot_dir = dir.join("plots");
    std::fs::create_dir_all(&plot_dir).map_err(|source| IoError::Io { path: plot_dir.clone(), source })?;
    let mut files = Vec::new();
    let mut save = |name: String, svg: String| -> Result<(), IoError> {
        let path = plot_dir.join(name);
        std::fs::write(&path, svg).map_err(|source| IoError::Io { path: path.clone(), source })?;
        files.push(path);
        Ok(())
    };
    let t = grid.points();
    for set in &out.indices {
        let mut panels: Vec<Panel> = set
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| Panel {
                title: f.clone(),
                series: vec![
                    Series { name: "first order".into(), values: set.phi1[i].clone() },
                    Series { name: "total order".into(), values: set.phi_t[i].clone() },
                    Series { name: "interaction".into(), values: set.phi_i[i].clone() },
                ],
                bands: vec![],
            })
            .collect();
        panels.push(Panel {
            title: "total change".into(),
            series: vec![Series { name: "delta".into(), values: set.total_delta.clone() }],
            bands: vec![],
        });
        save(
            format!("indices_{}.svg", file_stem(&set.model_id)),
            svg::render(&format!("Sensitivity indices, {}", set.model_id), t, &panels),
        )?;
    }
    if let Some(fit) = &out.fanova {
        let panels: Vec<Panel> = fit
            .design
            .column_names()
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let bands = out
                    .tests
                    .iter()
                    .find(|h| h.column == j)
                    .map(|h| {
                        h.significant
                            .iter()
                            .map(|s| Band { alpha: s.alpha, intervals: s.intervals.clone() })
                            .collect()
                    })
                    .unwrap_or_default();
                Panel { title: name.clone(), series: vec![Series { name, values: fit.coefficient(j) }], bands }
            })
            .collect();
        save("coefficients.svg".into(), svg::render("Coefficient functions", t, &panels))?;
    }
    Ok(files)
}
