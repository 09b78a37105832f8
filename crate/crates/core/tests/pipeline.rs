use std::collections::HashMap;
use std::fs;
use std::path::Path;

use fsens_core::io::{read_index_table, read_run_table_from, IndexKind, RawRunTable};
use fsens_core::spline::{Domain, TimeGrid};
use fsens_core::synthetic::{generate_ensemble, SyntheticModelSpec};
use fsens_core::{
    run_pipeline, write_outputs, AnalysisConfig, DesignEncoding, ErrorKind, LambdaChoice, Stage,
};

fn csv_bytes(n_models: usize) -> Vec<u8> {
    let spec = SyntheticModelSpec::demo(2010.0, 2090.0, n_models, 0.05);
    let grid = TimeGrid::uniform(Domain::new(2010.0, 2090.0).unwrap(), 10.0).unwrap();
    let mut buf = Vec::new();
    generate_ensemble(&spec, &grid, 9).unwrap().write_csv(&mut buf).unwrap();
    buf
}

fn table(n_models: usize) -> RawRunTable {
    read_run_table_from(csv_bytes(n_models).as_slice()).unwrap()
}

fn config() -> AnalysisConfig {
    AnalysisConfig { domain: Some((2020.0, 2090.0)), permutations: 99, ..Default::default() }
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.push((rel, fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files
}

#[test]
fn index_table_round_trips_exactly() {
    let out = run_pipeline(&config(), &table(3), Stage::Indices, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path(), false).unwrap();
    let records = read_index_table(fs::File::open(dir.path().join("indices.csv")).unwrap()).unwrap();
    let g = out.grid.as_ref().unwrap().len();
    assert_eq!(records.len(), 3 * (3 * 5 + 1) * g);
    let stored: HashMap<(String, String, Option<String>, u64), u64> = records
        .iter()
        .map(|r| ((r.model_id.clone(), r.kind.to_string(), r.input.clone(), r.t.to_bits()), r.value.to_bits()))
        .collect();
    let lookup = |m: &str, kind: IndexKind, input: Option<&str>, t: f64| {
        stored[&(m.to_string(), kind.to_string(), input.map(String::from), t.to_bits())]
    };
    for set in &out.indices {
        let m = set.model_id.as_str();
        for (kind, block) in [
            (IndexKind::FirstOrder, &set.phi1),
            (IndexKind::TotalOrder, &set.phi_t),
            (IndexKind::Interaction, &set.phi_i),
        ] {
            for (f, curve) in set.factors.iter().zip(block) {
                for (t, v) in set.grid.points().iter().zip(curve) {
                    assert_eq!(lookup(m, kind, Some(f), *t), v.to_bits());
                }
            }
        }
        for (t, v) in set.grid.points().iter().zip(&set.total_delta) {
            assert_eq!(lookup(m, IndexKind::TotalDelta, None, *t), v.to_bits());
        }
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let cfg = config();
    let t = table(4);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run_pipeline(&cfg, &t, Stage::Test, Some(77)).unwrap();
        write_outputs(&out, dir.path(), true).unwrap();
    }
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert!(fa.len() >= 10);
    assert_eq!(fa, fb);
}

#[test]
fn two_levels_give_two_bands() {
    let cfg = AnalysisConfig { alpha: vec![0.05, 0.5], ..config() };
    let out = run_pipeline(&cfg, &table(5), Stage::Test, Some(3)).unwrap();
    assert!(out.tests.iter().all(|t| t.significant.len() == 2));
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path(), true).unwrap();
    let svg = fs::read_to_string(dir.path().join("plots/coefficients.svg")).unwrap();
    assert!(svg.contains("data-alpha=\"0.05\""));
    assert!(svg.contains("data-alpha=\"0.5\""));
}

#[test]
fn total_delta_encoding_adds_one_row_per_model() {
    let cfg = AnalysisConfig { encoding: DesignEncoding::IncludeTotalDelta, ..config() };
    let out = run_pipeline(&cfg, &table(5), Stage::Fanova, None).unwrap();
    assert_eq!(out.fanova.unwrap().design.n_obs(), 55);
    let out = run_pipeline(&config(), &table(5), Stage::Fanova, None).unwrap();
    assert_eq!(out.fanova.unwrap().design.n_obs(), 50);
}

#[test]
fn gcv_selects_from_the_candidates() {
    let ladder = vec![1e-2, 1.0, 1e2, 1e4];
    let cfg = AnalysisConfig { lambda: LambdaChoice::Gcv(ladder.clone()), ..config() };
    let out = run_pipeline(&cfg, &table(2), Stage::Smooth, None).unwrap();
    assert_eq!(out.smoothed.reports.len(), 24);
    for r in &out.smoothed.reports {
        assert!(ladder.contains(&r.report.lambda));
        assert!(r.report.gcv_score.is_some());
    }
}

#[test]
fn unknown_label_is_rejected_with_its_line() {
    let mut text = String::from_utf8(csv_bytes(1)).unwrap();
    text.push_str("model01,shifted:FF,2010,1.0\n");
    let e = read_run_table_from(text.as_bytes()).unwrap_err().to_string();
    assert!(e.contains("shifted:FF"), "{e}");
    assert!(e.contains(&format!("line {}", text.lines().count())), "{e}");
}

#[test]
fn header_only_input_gives_empty_output() {
    let t = read_run_table_from("model,run_label,t,value\n".as_bytes()).unwrap();
    let out = run_pipeline(&config(), &t, Stage::Test, Some(1)).unwrap();
    assert!(out.indices.is_empty() && out.fanova.is_none());
    assert_eq!(out.warnings.len(), 1);
}

#[test]
fn missing_run_is_an_input_error() {
    let text = String::from_utf8(csv_bytes(2)).unwrap();
    let kept: String = text.lines().filter(|l| !l.starts_with("model02,full,")).map(|l| format!("{l}\n")).collect();
    let e = run_pipeline(&config(), &read_run_table_from(kept.as_bytes()).unwrap(), Stage::Indices, None)
        .unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Input);
}
