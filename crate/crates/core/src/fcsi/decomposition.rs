//! Orthogonal decomposition of `f_t(x)` under a discrete product measure.
//!
//! Inputs take finitely many levels, so the decomposition is computed by
//! enumerating every corner of the level lattice. Subsets of inputs are
//! bitmasks; term `S` is stored as a table over the level combinations of
//! the inputs in `S` (mixed radix, lowest input varies fastest), each entry
//! a vector over the evaluation grid.

use std::collections::BTreeMap;

use super::FcsiError;

/// Largest number of inputs accepted by [`full_decomposition`].
pub const MAX_INPUTS: usize = 12;

/// Product of per-input discrete measures, each a list of `(level, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProductMeasure {
    inputs: Vec<Vec<(f64, f64)>>,
}

impl DiscreteProductMeasure {
    pub fn new(inputs: Vec<Vec<(f64, f64)>>) -> Result<Self, FcsiError> {
        if inputs.is_empty() {
            return Err(FcsiError::InvalidMeasure("no inputs".into()));
        }
        for (i, marginal) in inputs.iter().enumerate() {
            if marginal.is_empty() {
                return Err(FcsiError::InvalidMeasure(format!("input {i} has no levels")));
            }
            if marginal.iter().any(|&(x, w)| !x.is_finite() || !w.is_finite() || w < 0.0) {
                return Err(FcsiError::InvalidMeasure(format!(
                    "input {i} has a non-finite level or a negative weight"
                )));
            }
            let mass: f64 = marginal.iter().map(|&(_, w)| w).sum();
            if (mass - 1.0).abs() > 1e-12 {
                return Err(FcsiError::InvalidMeasure(format!(
                    "weights of input {i} sum to {mass}, not 1"
                )));
            }
        }
        Ok(Self { inputs })
    }

    /// Unit mass at `reference` for every input, with `shifted` as a second
    /// (zero-weight) level: the finite-change setting.
    pub fn dirac(p: usize, reference: f64, shifted: f64) -> Self {
        Self { inputs: vec![vec![(reference, 1.0), (shifted, 0.0)]; p] }
    }

    /// Two equally weighted levels per input.
    pub fn uniform_two_level(p: usize, low: f64, high: f64) -> Self {
        Self { inputs: vec![vec![(low, 0.5), (high, 0.5)]; p] }
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.inputs.iter().map(Vec::len).collect()
    }

    pub fn level(&self, input: usize, index: usize) -> f64 {
        self.inputs[input][index].0
    }

    pub fn weight(&self, input: usize, index: usize) -> f64 {
        self.inputs[input][index].1
    }

    fn weights(&self, input: usize) -> Vec<f64> {
        self.inputs[input].iter().map(|&(_, w)| w).collect()
    }
}

fn corner_count(levels: &[usize]) -> usize {
    levels.iter().product()
}

fn encode(levels: &[usize], corner: &[usize]) -> usize {
    let mut idx = 0;
    for i in (0..levels.len()).rev() {
        idx = idx * levels[i] + corner[i];
    }
    idx
}

fn decode(levels: &[usize], mut idx: usize) -> Vec<usize> {
    levels
        .iter()
        .map(|&l| {
            let d = idx % l;
            idx /= l;
            d
        })
        .collect()
}

fn members(mask: usize, p: usize) -> Vec<usize> {
    (0..p).filter(|i| mask & (1 << i) != 0).collect()
}

/// Local index of `corner` restricted to the inputs in `mask`.
fn project(levels: &[usize], mask: usize, corner: &[usize]) -> usize {
    let mut idx = 0;
    for i in (0..levels.len()).rev() {
        if mask & (1 << i) != 0 {
            idx = idx * levels[i] + corner[i];
        }
    }
    idx
}

fn local_size(levels: &[usize], mask: usize) -> usize {
    members(mask, levels.len()).iter().map(|&i| levels[i]).product()
}

/// Model output at every corner of the level lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerTable {
    levels: Vec<usize>,
    grid_len: usize,
    values: Vec<Vec<f64>>,
}

impl CornerTable {
    /// `entries` maps a corner (one level index per input) to its output
    /// over the grid; every corner must be present.
    pub fn new(
        levels: Vec<usize>,
        entries: &BTreeMap<Vec<usize>, Vec<f64>>,
    ) -> Result<Self, FcsiError> {
        if levels.contains(&0) {
            return Err(FcsiError::InvalidMeasure("every input needs at least one level".into()));
        }
        if levels.len() > MAX_INPUTS {
            return Err(FcsiError::TooManyInputs { p: levels.len(), max: MAX_INPUTS });
        }
        let n = corner_count(&levels);
        let mut values = Vec::with_capacity(n);
        let mut grid_len = None;
        for idx in 0..n {
            let corner = decode(&levels, idx);
            let v = entries.get(&corner).ok_or_else(|| FcsiError::MissingCorner(corner.clone()))?;
            let expected = *grid_len.get_or_insert(v.len());
            if v.len() != expected {
                return Err(FcsiError::LengthMismatch { expected, found: v.len() });
            }
            values.push(v.clone());
        }
        Ok(Self { levels, grid_len: grid_len.unwrap_or(0), values })
    }

    pub fn from_fn(
        levels: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> Vec<f64>,
    ) -> Result<Self, FcsiError> {
        let entries: BTreeMap<Vec<usize>, Vec<f64>> = (0..corner_count(&levels))
            .map(|idx| {
                let c = decode(&levels, idx);
                let v = f(&c);
                (c, v)
            })
            .collect();
        Self::new(levels, &entries)
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn n_inputs(&self) -> usize {
        self.levels.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn get(&self, corner: &[usize]) -> &[f64] {
        &self.values[encode(&self.levels, corner)]
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.values.len()).map(|idx| decode(&self.levels, idx))
    }
}

/// Terms `f_S` for every subset `S` of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTable {
    levels: Vec<usize>,
    grid_len: usize,
    terms: Vec<Vec<Vec<f64>>>,
}

impl DecompositionTable {
    pub fn n_inputs(&self) -> usize {
        self.levels.len()
    }

    /// `2^p`.
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    /// Value of term `mask` at `corner` (only the coordinates in `mask` matter).
    pub fn term(&self, mask: usize, corner: &[usize]) -> &[f64] {
        &self.terms[mask][project(&self.levels, mask, corner)]
    }

    /// The constant term, the mean of `f` under the measure.
    pub fn constant(&self) -> &[f64] {
        &self.terms[0][0]
    }

    /// Sum of all terms whose subset contains `input`, evaluated at `corner`.
    pub fn total_effect(&self, input: usize, corner: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid_len];
        for mask in (0..self.terms.len()).filter(|m| m & (1 << input) != 0) {
            for (o, v) in out.iter_mut().zip(self.term(mask, corner)) {
                *o += v;
            }
        }
        out
    }

    /// Largest `|integral of f_S d mu_k|` over nonempty `S`, `k` in `S`, and
    /// every value of the remaining coordinates of `S`.
    pub fn max_zero_mean_violation(&self, measure: &DiscreteProductMeasure) -> f64 {
        let p = self.n_inputs();
        let mut worst = 0.0f64;
        for mask in 1..self.terms.len() {
            for k in members(mask, p) {
                let rest = mask & !(1 << k);
                let weights = measure.weights(k);
                for rest_idx in 0..local_size(&self.levels, rest) {
                    let mut corner = vec![0; p];
                    let digits = decode(
                        &members(rest, p).iter().map(|&i| self.levels[i]).collect::<Vec<_>>(),
                        rest_idx,
                    );
                    for (i, d) in members(rest, p).into_iter().zip(digits) {
                        corner[i] = d;
                    }
                    let mut acc = vec![0.0; self.grid_len];
                    for (level, w) in weights.iter().enumerate() {
                        corner[k] = level;
                        for (a, v) in acc.iter_mut().zip(self.term(mask, &corner)) {
                            *a += w * v;
                        }
                    }
                    worst = acc.iter().fold(worst, |m, v| m.max(v.abs()));
                }
            }
        }
        worst
    }

    /// Largest `|<f_S, f_T>|` over distinct subsets under the product measure.
    pub fn max_inner_product(&self, measure: &DiscreteProductMeasure) -> f64 {
        let n_terms = self.terms.len();
        let corners: Vec<(Vec<usize>, f64)> = (0..corner_count(&self.levels))
            .map(|idx| {
                let c = decode(&self.levels, idx);
                let w = c.iter().enumerate().map(|(i, &l)| measure.weight(i, l)).product();
                (c, w)
            })
            .collect();
        let mut worst = 0.0f64;
        for s in 0..n_terms {
            for t in s + 1..n_terms {
                let mut acc = vec![0.0; self.grid_len];
                for (c, w) in &corners {
                    let (a, b) = (self.term(s, c), self.term(t, c));
                    for (k, x) in acc.iter_mut().enumerate() {
                        *x += w * a[k] * b[k];
                    }
                }
                worst = acc.iter().fold(worst, |m, v| m.max(v.abs()));
            }
        }
        worst
    }
}

/// Computes every term by marginalizing `f` over the inputs outside `S` and
/// subtracting all terms of strict subsets of `S`.
pub fn full_decomposition(
    corners: &CornerTable,
    measure: &DiscreteProductMeasure,
) -> Result<DecompositionTable, FcsiError> {
    let p = corners.n_inputs();
    if p > MAX_INPUTS {
        return Err(FcsiError::TooManyInputs { p, max: MAX_INPUTS });
    }
    if measure.levels() != corners.levels() {
        return Err(FcsiError::InvalidMeasure(format!(
            "measure has levels {:?} but the corner table has {:?}",
            measure.levels(),
            corners.levels()
        )));
    }
    let levels = corners.levels().to_vec();
    let g = corners.grid_len();
    let full = (1usize << p) - 1;

    // Marginals g_S, from the full set downwards by integrating out one input.
    let mut marginals: Vec<Vec<Vec<f64>>> = vec![Vec::new(); full + 1];
    marginals[full] = corners.values.clone();
    for mask in (0..full).rev() {
        let j = (0..p).find(|i| mask & (1 << i) == 0).expect("mask is not full");
        let parent = mask | (1 << j);
        let weights = measure.weights(j);
        let mut out = vec![vec![0.0; g]; local_size(&levels, mask)];
        let parent_members = members(parent, p);
        let parent_levels: Vec<usize> = parent_members.iter().map(|&i| levels[i]).collect();
        for (pidx, values) in marginals[parent].iter().enumerate() {
            let digits = decode(&parent_levels, pidx);
            let mut corner = vec![0; p];
            for (&i, &d) in parent_members.iter().zip(&digits) {
                corner[i] = d;
            }
            let w = weights[corner[j]];
            if w == 0.0 {
                continue;
            }
            let target = &mut out[project(&levels, mask, &corner)];
            for (o, v) in target.iter_mut().zip(values) {
                *o += w * v;
            }
        }
        marginals[mask] = out;
    }

    let mut terms: Vec<Vec<Vec<f64>>> = Vec::with_capacity(full + 1);
    for mask in 0..=full {
        let mask_members = members(mask, p);
        let mask_levels: Vec<usize> = mask_members.iter().map(|&i| levels[i]).collect();
        let mut term = marginals[mask].clone();
        for (lidx, values) in term.iter_mut().enumerate() {
            let digits = decode(&mask_levels, lidx);
            let mut corner = vec![0; p];
            for (&i, &d) in mask_members.iter().zip(&digits) {
                corner[i] = d;
            }
            // Strict submasks of `mask`.
            let mut sub = mask;
            while sub != 0 {
                sub = (sub - 1) & mask;
                let lower = &terms[sub][project(&levels, sub, &corner)];
                for (v, l) in values.iter_mut().zip(lower) {
                    *v -= l;
                }
            }
        }
        terms.push(term);
    }
    Ok(DecompositionTable { levels, grid_len: g, terms })
}

/// Largest reconstruction error `|f(x) - sum_S f_S(x_S)|` over all corners
/// and grid points.
pub fn check_sum(table: &DecompositionTable, corners: &CornerTable) -> f64 {
    let mut worst = 0.0f64;
    for corner in corners.corners() {
        let mut acc = vec![0.0; table.grid_len()];
        for mask in 0..table.n_terms() {
            for (a, v) in acc.iter_mut().zip(table.term(mask, &corner)) {
                *a += v;
            }
        }
        for (a, f) in acc.iter().zip(corners.get(&corner)) {
            worst = worst.max((f - a).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bilinear_at(t: f64) -> CornerTable {
        CornerTable::from_fn(vec![2, 2], |c| {
            let (x1, x2) = (c[0] as f64, c[1] as f64);
            vec![2.0 * x1 + 3.0 * x2 + x1 * x2 * t]
        })
        .unwrap()
    }

    #[test]
    fn dirac_bilinear_terms_at_full_corner() {
        let table = full_decomposition(&bilinear_at(1.0), &DiscreteProductMeasure::dirac(2, 0.0, 1.0))
            .unwrap();
        let full = [1, 1];
        assert_eq!(table.n_terms(), 4);
        assert_eq!(table.constant(), &[0.0]);
        assert_eq!(table.term(0b01, &full), &[2.0]);
        assert_eq!(table.term(0b10, &full), &[3.0]);
        assert_eq!(table.term(0b11, &full), &[1.0]);
        assert_eq!(table.total_effect(0, &full), vec![3.0]);
    }

    #[test]
    fn constant_function_has_only_constant_term() {
        let corners = CornerTable::from_fn(vec![2, 2, 2], |_| vec![4.5, 4.5]).unwrap();
        let table =
            full_decomposition(&corners, &DiscreteProductMeasure::uniform_two_level(3, 0.0, 1.0))
                .unwrap();
        assert_eq!(table.constant(), &[4.5, 4.5]);
        for mask in 1..8 {
            for c in corners.corners() {
                assert!(table.term(mask, &c).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn uniform_measure_centers_main_effect() {
        let corners = CornerTable::from_fn(vec![2, 2], |c| vec![c[0] as f64]).unwrap();
        let measure = DiscreteProductMeasure::uniform_two_level(2, 0.0, 1.0);
        let table = full_decomposition(&corners, &measure).unwrap();
        assert_eq!(table.constant(), &[0.5]);
        assert_eq!(table.term(0b01, &[0, 0]), &[-0.5]);
        assert_eq!(table.term(0b01, &[1, 0]), &[0.5]);
        assert_eq!(table.term(0b10, &[0, 1]), &[0.0]);
        assert!(table.max_zero_mean_violation(&measure) < 1e-15);
        assert!(check_sum(&table, &corners) < 1e-15);
    }

    #[test]
    fn zeroed_term_breaks_reconstruction() {
        let corners = bilinear_at(2.0);
        let mut table =
            full_decomposition(&corners, &DiscreteProductMeasure::dirac(2, 0.0, 1.0)).unwrap();
        assert!(check_sum(&table, &corners) < 1e-12);
        for v in table.terms[0b11].iter_mut() {
            v.fill(0.0);
        }
        assert!(check_sum(&table, &corners) > 0.5);
    }

    #[test]
    fn input_validation() {
        let mut entries = BTreeMap::new();
        entries.insert(vec![0, 0], vec![1.0]);
        entries.insert(vec![1, 0], vec![1.0]);
        entries.insert(vec![0, 1], vec![1.0]);
        assert_eq!(CornerTable::new(vec![2, 2], &entries), Err(FcsiError::MissingCorner(vec![1, 1])));
        assert!(matches!(
            CornerTable::from_fn(vec![2; 13], |_| vec![0.0]),
            Err(FcsiError::TooManyInputs { p: 13, .. })
        ));
        assert!(DiscreteProductMeasure::new(vec![vec![(0.0, 0.4), (1.0, 0.4)]]).is_err());
        assert!(DiscreteProductMeasure::new(vec![vec![(0.0, -0.5), (1.0, 1.5)]]).is_err());
        let three = DiscreteProductMeasure::new(vec![vec![(0.0, 0.2), (0.5, 0.3), (1.0, 0.5)]; 2])
            .unwrap();
        assert!(full_decomposition(&bilinear_at(1.0), &three).is_err());
    }
}
