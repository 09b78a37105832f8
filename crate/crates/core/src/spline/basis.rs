use super::SplineError;

/// Closed interval `[start, end]` on which curves are defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    start: f64,
    end: f64,
}

impl Domain {
    pub fn new(start: f64, end: f64) -> Result<Self, SplineError> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(SplineError::DegenerateDomain { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Strictly increasing evaluation or observation points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, SplineError> {
        if points.is_empty() {
            return Err(SplineError::InvalidGrid("grid has no points".into()));
        }
        if let Some(bad) = points.iter().find(|t| !t.is_finite()) {
            return Err(SplineError::InvalidGrid(format!("non-finite point {bad}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(SplineError::InvalidGrid(format!(
                "points must be strictly increasing, found {} followed by {}",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// Points `start, start + step, ...` up to and including `end` when it
    /// falls on the lattice.
    pub fn uniform(domain: Domain, step: f64) -> Result<Self, SplineError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(SplineError::InvalidGrid(format!("step must be positive, got {step}")));
        }
        let n = (domain.width() / step + 1e-9).floor() as usize + 1;
        let points = (0..n).map(|k| (domain.start() + k as f64 * step).min(domain.end())).collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn within(&self, domain: &Domain) -> bool {
        domain.contains(self.first()) && domain.contains(self.last())
    }
}

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    domain: Domain,
    degree: usize,
    knots: Vec<f64>,
    n_basis: usize,
}

impl SplineBasis {
    /// Builds `n_basis` B-splines of the given degree over `domain`, placing
    /// `n_basis - degree - 1` interior knots at equal spacing.
    pub fn new(domain: Domain, n_basis: usize, degree: usize) -> Result<Self, SplineError> {
        if n_basis < degree + 1 {
            return Err(SplineError::InvalidBasis { n_basis, degree });
        }
        let n_interior = n_basis - degree - 1;
        let mut knots = Vec::with_capacity(n_basis + degree + 1);
        knots.extend(std::iter::repeat_n(domain.start(), degree + 1));
        let step = domain.width() / (n_interior + 1) as f64;
        knots.extend((1..=n_interior).map(|k| domain.start() + k as f64 * step));
        knots.extend(std::iter::repeat_n(domain.end(), degree + 1));
        Ok(Self { domain, degree, knots, n_basis })
    }

    /// Basis over an explicit clamped knot vector.
    pub(crate) fn from_knots(domain: Domain, degree: usize, knots: Vec<f64>) -> Self {
        let n_basis = knots.len() - degree - 1;
        Self { domain, degree, knots, n_basis }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Full knot vector including the repeated boundary knots.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.n_basis]
    }

    fn check(&self, t: f64) -> Result<(), SplineError> {
        if self.domain.contains(t) {
            Ok(())
        } else {
            Err(SplineError::OutOfDomain { t, start: self.domain.start(), end: self.domain.end() })
        }
    }

    /// Index `s` of the knot span with `knots[s] <= t < knots[s + 1]`; the
    /// right endpoint belongs to the last non-empty span.
    pub(crate) fn find_span(&self, t: f64) -> usize {
        let p = self.degree;
        let n = self.n_basis;
        if t >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values and derivatives up to order `n_deriv` of the `degree + 1`
    /// functions that are nonzero on `span`. `out[k][j]` is the `k`-th
    /// derivative of basis function `span - degree + j`.
    pub(crate) fn span_derivatives(&self, span: usize, t: f64, n_deriv: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; n_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = n_deriv.min(p);
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=top {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=top {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// All `n_basis` basis values at `t`.
    pub fn values(&self, t: f64) -> Result<Vec<f64>, SplineError> {
        self.derivatives(t, 0)
    }

    /// All `n_basis` basis derivatives of the given order at `t`.
    pub fn derivatives(&self, t: f64, order: usize) -> Result<Vec<f64>, SplineError> {
        self.check(t)?;
        let span = self.find_span(t);
        let local = self.span_derivatives(span, t, order);
        let mut out = vec![0.0; self.n_basis];
        let offset = span - self.degree;
        out[offset..offset + self.degree + 1].copy_from_slice(&local[order]);
        Ok(out)
    }
}

/// A smoothed curve: coefficient expansion over a spline basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    basis: SplineBasis,
    coefficients: Vec<f64>,
    source_grid: Option<TimeGrid>,
}

impl FunctionalSample {
    pub fn new(basis: SplineBasis, coefficients: Vec<f64>) -> Result<Self, SplineError> {
        if coefficients.len() != basis.n_basis() {
            return Err(SplineError::LengthMismatch {
                expected: basis.n_basis(),
                found: coefficients.len(),
            });
        }
        Ok(Self { basis, coefficients, source_grid: None })
    }

    pub fn with_source_grid(mut self, grid: TimeGrid) -> Self {
        self.source_grid = Some(grid);
        self
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn source_grid(&self) -> Option<&TimeGrid> {
        self.source_grid.as_ref()
    }

    pub fn domain(&self) -> Domain {
        self.basis.domain()
    }

    pub fn eval(&self, t: f64) -> Result<f64, SplineError> {
        self.basis.check(t)?;
        let span = self.basis.find_span(t);
        let local = self.basis.span_derivatives(span, t, 0);
        let offset = span - self.basis.degree();
        Ok(local[0].iter().zip(&self.coefficients[offset..]).map(|(b, c)| b * c).sum())
    }

    pub fn eval_grid(&self, grid: &TimeGrid) -> Result<Vec<f64>, SplineError> {
        grid.points().iter().map(|&t| self.eval(t)).collect()
    }
}
