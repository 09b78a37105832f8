//! Interval-wise permutation testing of a linear hypothesis on the
//! coefficient functions.
//!
//! Null responses are rebuilt as reduced-model fitted values plus permuted
//! (or sign-flipped) reduced-model residuals. The permutation of replicate
//! `b` depends only on the seed, `b` and the identity of each design row, so
//! results do not depend on row order or thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::fanova::{FanovaError, FanovaFit, HypothesisSpec, PreparedHypothesis};
use crate::spline::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IwtError {
    #[error("invalid permutation settings: {0}")]
    InvalidConfig(String),

    #[error("interval [{start}, {end}] is not within a grid of {len} points")]
    InvalidInterval { start: usize, end: usize, len: usize },

    #[error("significance level {0} is not in (0, 1)")]
    InvalidAlpha(f64),

    #[error(transparent)]
    Fanova(#[from] FanovaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermutationScheme {
    /// Permute reduced-model residuals across rows.
    #[default]
    ResidualPermutation,
    /// Flip the sign of each reduced-model residual at random.
    SignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub n_permutations: usize,
    pub seed: u64,
    pub scheme: PermutationScheme,
}

impl PermutationConfig {
    pub fn new(n_permutations: usize, seed: u64) -> Result<Self, IwtError> {
        if n_permutations == 0 {
            return Err(IwtError::InvalidConfig("at least one permutation is required".into()));
        }
        Ok(Self { n_permutations, seed, scheme: PermutationScheme::default() })
    }

    pub fn with_scheme(mut self, scheme: PermutationScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn replicate_key(seed: u64, b: u64) -> u64 {
    mix(seed ^ mix(b))
}

/// Row `r` of replicate `b` receives the residual of row `source[r]`.
///
/// Rows are ranked by identity and by a keyed hash of identity; the k-th
/// row in the first ranking takes the residual of the k-th row in the second.
pub fn permutation_sources(seed: u64, b: u64, ids: &[u64]) -> Vec<usize> {
    let key = replicate_key(seed, b);
    let mut canonical: Vec<usize> = (0..ids.len()).collect();
    canonical.sort_by_key(|&r| (ids[r], r));
    let mut shuffled = canonical.clone();
    shuffled.sort_by_key(|&r| (mix(key ^ ids[r]), ids[r], r));
    let mut source = vec![0; ids.len()];
    for (&r, &s) in canonical.iter().zip(&shuffled) {
        source[r] = s;
    }
    source
}

/// `+1` or `-1` for every row of replicate `b`.
pub fn sign_flips(seed: u64, b: u64, ids: &[u64]) -> Vec<f64> {
    let key = replicate_key(seed, b);
    ids.iter().map(|&id| if mix(key ^ id) >> 63 == 0 { 1.0 } else { -1.0 }).collect()
}

/// Observed pointwise statistic and its permutation replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationDistribution {
    pub observed: Vec<f64>,
    /// One statistic curve per replicate.
    pub replicates: Vec<Vec<f64>>,
}

impl PermutationDistribution {
    pub fn grid_len(&self) -> usize {
        self.observed.len()
    }

    pub fn n_permutations(&self) -> usize {
        self.replicates.len()
    }

    /// Add-one p-value of the mean statistic over `[start, end]`.
    pub fn interval_pvalue(&self, start: usize, end: usize) -> Result<f64, IwtError> {
        let len = self.grid_len();
        if start > end || end >= len {
            return Err(IwtError::InvalidInterval { start, end, len });
        }
        let obs = exceedance_threshold(interval_mean(&self.observed, start, end));
        let hits = self.replicates.iter().filter(|w| interval_mean(w, start, end) >= obs).count();
        Ok(add_one(hits, self.n_permutations()))
    }

    /// p-values of every contiguous interval, indexed `[start][end - start]`.
    pub fn all_interval_pvalues(&self) -> Vec<Vec<f64>> {
        let g = self.grid_len();
        let b = self.n_permutations();
        let mut hits: Vec<Vec<usize>> = (0..g).map(|s| vec![0; g - s]).collect();
        let observed: Vec<Vec<f64>> = running_means(&self.observed)
            .into_iter()
            .map(|row| row.into_iter().map(exceedance_threshold).collect())
            .collect();
        for w in &self.replicates {
            let means = running_means(w);
            for (s, row) in hits.iter_mut().enumerate() {
                for (h, (m, o)) in row.iter_mut().zip(means[s].iter().zip(&observed[s])) {
                    if m >= o {
                        *h += 1;
                    }
                }
            }
        }
        hits.into_iter().map(|row| row.into_iter().map(|h| add_one(h, b)).collect()).collect()
    }
}

/// Relative tolerance under which a replicate counts as tying the observed
/// statistic. An identity permutation rebuilds the data only up to rounding.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Smallest replicate value counted as at least as extreme as `observed`.
pub fn exceedance_threshold(observed: f64) -> f64 {
    if observed.is_finite() {
        observed - TIE_TOLERANCE * observed.abs()
    } else {
        observed
    }
}

fn add_one(hits: usize, b: usize) -> f64 {
    (1 + hits) as f64 / (b + 1) as f64
}

fn interval_mean(w: &[f64], start: usize, end: usize) -> f64 {
    let mut acc = 0.0;
    for v in &w[start..=end] {
        acc += v;
    }
    acc / (end - start + 1) as f64
}

/// `means[s][e - s]` is the mean of `w[s..=e]`, summed left to right.
fn running_means(w: &[f64]) -> Vec<Vec<f64>> {
    (0..w.len())
        .map(|s| {
            let mut acc = 0.0;
            w[s..]
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    acc += v;
                    acc / (k + 1) as f64
                })
                .collect()
        })
        .collect()
}

pub fn permutation_distribution(
    fit: &FanovaFit,
    spec: &HypothesisSpec,
    config: &PermutationConfig,
) -> Result<PermutationDistribution, IwtError> {
    if config.n_permutations == 0 {
        return Err(IwtError::InvalidConfig("at least one permutation is required".into()));
    }
    let prepared = PreparedHypothesis::new(fit, spec)?;
    let sigma2 = fit.sigma2.as_ref().ok_or(FanovaError::VarianceUndefined {
        n_obs: fit.design.n_obs(),
        n_coef: fit.design.n_coef(),
    })?;
    let observed = prepared.pointwise(&fit.coefficients, sigma2);

    let fitted0 = prepared.reduced_fitted(fit);
    let resid0 = &fit.responses - &fitted0;
    let ids: Vec<u64> =
        fit.design.rows().iter().map(|m| fnv1a(m.identity().as_bytes())).collect();
    let (n, g) = resid0.shape();

    let replicates = (0..config.n_permutations as u64)
        .into_par_iter()
        .map(|b| {
            let ystar = match config.scheme {
                PermutationScheme::ResidualPermutation => {
                    let src = permutation_sources(config.seed, b, &ids);
                    DMatrix::from_fn(n, g, |r, k| fitted0[(r, k)] + resid0[(src[r], k)])
                }
                PermutationScheme::SignFlip => {
                    let s = sign_flips(config.seed, b, &ids);
                    DMatrix::from_fn(n, g, |r, k| fitted0[(r, k)] + s[r] * resid0[(r, k)])
                }
            };
            let (coef, s2) = fit.refit(&ystar);
            // n > 2p holds because the observed variance exists.
            prepared.pointwise(&coef, s2.as_deref().unwrap_or(sigma2))
        })
        .collect();
    Ok(PermutationDistribution { observed, replicates })
}

/// Unadjusted permutation p-value at every grid point.
pub fn pointwise_pvalues(
    fit: &FanovaFit,
    spec: &HypothesisSpec,
    config: &PermutationConfig,
) -> Result<Vec<f64>, IwtError> {
    let dist = permutation_distribution(fit, spec, config)?;
    (0..dist.grid_len()).map(|k| dist.interval_pvalue(k, k)).collect()
}

pub fn interval_pvalue(
    fit: &FanovaFit,
    spec: &HypothesisSpec,
    start: usize,
    end: usize,
    config: &PermutationConfig,
) -> Result<f64, IwtError> {
    let len = fit.grid.len();
    if start > end || end >= len {
        return Err(IwtError::InvalidInterval { start, end, len });
    }
    permutation_distribution(fit, spec, config)?.interval_pvalue(start, end)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValueFunction {
    pub grid: TimeGrid,
    pub label: String,
    pub unadjusted: Vec<f64>,
    /// Maximum interval p-value over all intervals containing each point.
    pub adjusted: Vec<f64>,
}

impl PValueFunction {
    pub fn from_distribution(
        grid: TimeGrid,
        label: impl Into<String>,
        dist: &PermutationDistribution,
    ) -> Self {
        let table = dist.all_interval_pvalues();
        let g = dist.grid_len();
        let unadjusted = (0..g).map(|k| table[k][0]).collect();
        let mut adjusted = vec![0.0f64; g];
        for (s, row) in table.iter().enumerate() {
            for (off, &p) in row.iter().enumerate() {
                for a in &mut adjusted[s..=s + off] {
                    *a = a.max(p);
                }
            }
        }
        Self { grid, label: label.into(), unadjusted, adjusted }
    }
}

pub fn adjusted_pvalue_function(
    fit: &FanovaFit,
    spec: &HypothesisSpec,
    config: &PermutationConfig,
) -> Result<PValueFunction, IwtError> {
    let dist = permutation_distribution(fit, spec, config)?;
    Ok(PValueFunction::from_distribution(fit.grid.clone(), spec.label(), &dist))
}

/// Inclusive index range of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridInterval {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificantIntervals {
    pub alpha: f64,
    pub intervals: Vec<GridInterval>,
}

impl SignificantIntervals {
    pub fn contains(&self, k: usize) -> bool {
        self.intervals.iter().any(|i| i.start <= k && k <= i.end)
    }
}

/// Maximal runs of grid points whose adjusted p-value is at most `alpha`.
pub fn significant_intervals(
    pvalues: &PValueFunction,
    alpha: f64,
) -> Result<SignificantIntervals, IwtError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(IwtError::InvalidAlpha(alpha));
    }
    let mut intervals = Vec::new();
    let mut open: Option<usize> = None;
    for (k, &p) in pvalues.adjusted.iter().enumerate() {
        match (p <= alpha, open) {
            (true, None) => open = Some(k),
            (false, Some(s)) => {
                intervals.push(GridInterval { start: s, end: k - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        intervals.push(GridInterval { start: s, end: pvalues.adjusted.len() - 1 });
    }
    Ok(SignificantIntervals { alpha, intervals })
}
