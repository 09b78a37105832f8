//! Flat `key = value` analysis configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::fanova::DesignEncoding;
use crate::iwt::PermutationScheme;
use crate::spline::default_lambda_ladder;

use super::IoError;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Selected per curve by GCV among the candidates.
    Gcv(Vec<f64>),
}

/// Analysis settings. Every key is optional in the file.
///
/// | key | default |
/// |---|---|
/// | `domain` | range of the data |
/// | `n_basis` | 9 |
/// | `degree` | 3 |
/// | `lambda` | 100, or `gcv` |
/// | `lambda_candidates` | `1e-4 .. 1e6`, 21 log-spaced values |
/// | `grid_step` | 1 |
/// | `epsilon_rel` | 1e-8 |
/// | `alpha` | `0.05,0.1` |
/// | `permutations` | 999 |
/// | `seed` | none |
/// | `scheme` | `residual` (or `signflip`) |
/// | `include_total_delta` | false |
/// | `factors` | order of first appearance in the data |
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub domain: Option<(f64, f64)>,
    pub n_basis: usize,
    pub degree: usize,
    pub lambda: LambdaChoice,
    pub grid_step: f64,
    pub epsilon_rel: f64,
    pub alpha: Vec<f64>,
    pub permutations: usize,
    pub seed: Option<u64>,
    pub scheme: PermutationScheme,
    pub encoding: DesignEncoding,
    pub factors: Option<Vec<String>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            domain: None,
            n_basis: 9,
            degree: 3,
            lambda: LambdaChoice::Fixed(100.0),
            grid_step: 1.0,
            epsilon_rel: 1e-8,
            alpha: vec![0.05, 0.1],
            permutations: 999,
            seed: None,
            scheme: PermutationScheme::ResidualPermutation,
            encoding: DesignEncoding::Default,
            factors: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    v.trim().parse::<f64>().map_err(|_| format!("`{key}` expects a number, got `{v}`"))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|x| parse_f64(key, x)).collect()
}

fn parse_usize(key: &str, v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("`{key}` expects a non-negative integer, got `{v}`"))
}

pub fn parse_alpha_list(v: &str) -> Result<Vec<f64>, String> {
    let mut alpha = parse_list("alpha", v)?;
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(format!("alpha level {a} is not in (0, 1)"));
    }
    alpha.sort_by(f64::total_cmp);
    alpha.dedup();
    Ok(alpha)
}

impl AnalysisConfig {
    pub fn from_file(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        let mut candidates: Option<Vec<f64>> = None;
        let mut use_gcv = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| IoError::Config { line: i + 1, message };
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "domain" => {
                    let v = parse_list(key, value).map_err(err)?;
                    if v.len() != 2 || !(v[0] < v[1]) || !v.iter().all(|x| x.is_finite()) {
                        return Err(err(format!("`domain` expects `start,end` with start < end, got `{value}`")));
                    }
                    cfg.domain = Some((v[0], v[1]));
                }
                "n_basis" => cfg.n_basis = parse_usize(key, value).map_err(err)?,
                "degree" => cfg.degree = parse_usize(key, value).map_err(err)?,
                "lambda" => {
                    if value.eq_ignore_ascii_case("gcv") {
                        use_gcv = true;
                    } else {
                        let l = parse_f64(key, value).map_err(err)?;
                        if !(l >= 0.0 && l.is_finite()) {
                            return Err(err(format!("`lambda` must be finite and non-negative, got {l}")));
                        }
                        use_gcv = false;
                        cfg.lambda = LambdaChoice::Fixed(l);
                    }
                }
                "lambda_candidates" => {
                    let v = parse_list(key, value).map_err(err)?;
                    if v.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                        return Err(err("`lambda_candidates` must be finite and non-negative".into()));
                    }
                    candidates = Some(v);
                }
                "grid_step" => {
                    cfg.grid_step = parse_f64(key, value).map_err(err)?;
                    if !(cfg.grid_step > 0.0 && cfg.grid_step.is_finite()) {
                        return Err(err(format!("`grid_step` must be positive, got {value}")));
                    }
                }
                "epsilon_rel" => {
                    cfg.epsilon_rel = parse_f64(key, value).map_err(err)?;
                    if !(cfg.epsilon_rel >= 0.0 && cfg.epsilon_rel.is_finite()) {
                        return Err(err(format!("`epsilon_rel` must be non-negative, got {value}")));
                    }
                }
                "alpha" => cfg.alpha = parse_alpha_list(value).map_err(err)?,
                "permutations" => {
                    cfg.permutations = parse_usize(key, value).map_err(err)?;
                    if cfg.permutations == 0 {
                        return Err(err("`permutations` must be at least 1".into()));
                    }
                }
                "seed" => {
                    cfg.seed = Some(
                        value.parse().map_err(|_| err(format!("`seed` expects an integer, got `{value}`")))?,
                    )
                }
                "scheme" => {
                    cfg.scheme = match value {
                        "residual" => PermutationScheme::ResidualPermutation,
                        "signflip" => PermutationScheme::SignFlip,
                        _ => return Err(err(format!("`scheme` is `residual` or `signflip`, got `{value}`"))),
                    }
                }
                "include_total_delta" => {
                    cfg.encoding = match value {
                        "true" => DesignEncoding::IncludeTotalDelta,
                        "false" => DesignEncoding::Default,
                        _ => return Err(err(format!("`include_total_delta` is true or false, got `{value}`"))),
                    }
                }
                "factors" => {
                    cfg.factors = Some(value.split(',').map(|f| f.trim().to_string()).collect())
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if use_gcv {
            cfg.lambda = LambdaChoice::Gcv(candidates.unwrap_or_else(default_lambda_ladder));
        } else if candidates.is_some() {
            return Err(IoError::Config {
                line: 0,
                message: "`lambda_candidates` requires `lambda = gcv`".into(),
            });
        }
        if cfg.degree + 1 > cfg.n_basis {
            return Err(IoError::Config {
                line: 0,
                message: format!("n_basis = {} is too small for degree {}", cfg.n_basis, cfg.degree),
            });
        }
        Ok(cfg)
    }

    /// Settings in the same `key = value` form the parser accepts.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        if let Some((a, b)) = self.domain {
            let _ = writeln!(s, "domain = {a},{b}");
        }
        let _ = writeln!(s, "n_basis = {}", self.n_basis);
        let _ = writeln!(s, "degree = {}", self.degree);
        match &self.lambda {
            LambdaChoice::Fixed(l) => {
                let _ = writeln!(s, "lambda = {l:e}");
            }
            LambdaChoice::Gcv(c) => {
                let _ = writeln!(s, "lambda = gcv");
                let _ = writeln!(s, "lambda_candidates = {}", list(c));
            }
        }
        let _ = writeln!(s, "grid_step = {}", self.grid_step);
        let _ = writeln!(s, "epsilon_rel = {:e}", self.epsilon_rel);
        let _ = writeln!(s, "alpha = {}", self.alpha.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "permutations = {}", self.permutations);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let scheme = match self.scheme {
            PermutationScheme::ResidualPermutation => "residual",
            PermutationScheme::SignFlip => "signflip",
        };
        let _ = writeln!(s, "scheme = {scheme}");
        let _ = writeln!(
            s,
            "include_total_delta = {}",
            self.encoding == DesignEncoding::IncludeTotalDelta
        );
        if let Some(f) = &self.factors {
            let _ = writeln!(s, "factors = {}", f.join(","));
        }
        s
    }
}
