use nalgebra::{DMatrix, DVector};

use super::{gauss_legendre, FunctionalSample, SplineBasis, SplineError, TimeGrid};

/// Diagnostics of one penalized fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    pub lambda: f64,
    /// `None` when the fit interpolates (hat trace equals the number of points).
    pub gcv_score: Option<f64>,
    /// Trace of the hat matrix, i.e. effective degrees of freedom.
    pub hat_trace: f64,
    pub rss: f64,
    pub n_obs: usize,
}

/// Log-spaced ladder `10^-4, 10^-3.5, ..., 10^6` (21 values).
pub fn default_lambda_ladder() -> Vec<f64> {
    (0..21).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

/// Basis functions evaluated at every grid point, one row per point.
pub fn design_matrix(basis: &SplineBasis, grid: &TimeGrid) -> Result<DMatrix<f64>, SplineError> {
    let mut b = DMatrix::zeros(grid.len(), basis.n_basis());
    for (i, &t) in grid.points().iter().enumerate() {
        for (j, v) in basis.values(t)?.into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    Ok(b)
}

/// Roughness penalty `R[i][j] = integral of B_i'' * B_j''` over the domain.
///
/// Each knot span is integrated with a Gauss-Legendre rule that is exact for
/// the piecewise-polynomial integrand. Bases of degree below 2 have a
/// vanishing second derivative and yield the zero matrix.
pub fn penalty_matrix(basis: &SplineBasis) -> DMatrix<f64> {
    let k = basis.n_basis();
    let p = basis.degree();
    let mut r = DMatrix::zeros(k, k);
    if p < 2 {
        return r;
    }
    let (nodes, weights) = gauss_legendre(p + 1);
    let knots = basis.knots();
    for span in p..k {
        let (a, b) = (knots[span], knots[span + 1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in nodes.iter().zip(&weights) {
            let t = mid + half * x;
            let d2 = &basis.span_derivatives(span, t, 2)[2];
            let offset = span - p;
            for (ia, va) in d2.iter().enumerate() {
                for (ib, vb) in d2.iter().enumerate() {
                    r[(offset + ia, offset + ib)] += w * half * va * vb;
                }
            }
        }
    }
    // Symmetric by construction; enforce bitwise symmetry.
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Factor `E` with `E'E = R`, built as `L' D`: `D` maps coefficients to the
/// coefficients of the second derivative in the degree `p - 2` basis and
/// `L` is the Cholesky factor of that basis' Gram matrix. Straight lines lie
/// in the kernel of `D` exactly, which keeps very large penalties stable.
fn penalty_factor(basis: &SplineBasis) -> DMatrix<f64> {
    let k = basis.n_basis();
    let p = basis.degree();
    if p < 2 {
        return DMatrix::zeros(0, k);
    }
    let mut knots = basis.knots().to_vec();
    let mut degree = p;
    let mut diff = DMatrix::<f64>::identity(k, k);
    for _ in 0..2 {
        let n = diff.nrows();
        let mut step = DMatrix::<f64>::zeros(n - 1, n);
        for i in 0..n - 1 {
            let width = knots[i + degree + 1] - knots[i + 1];
            if width > 0.0 {
                let s = degree as f64 / width;
                step[(i, i)] = -s;
                step[(i, i + 1)] = s;
            }
        }
        diff = step * diff;
        knots = knots[1..knots.len() - 1].to_vec();
        degree -= 1;
    }
    let lower = SplineBasis::from_knots(basis.domain(), degree, knots);
    let m = lower.n_basis();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let (nodes, weights) = gauss_legendre(degree + 1);
    let lk = lower.knots().to_vec();
    for span in degree..m {
        let (a, b) = (lk[span], lk[span + 1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in nodes.iter().zip(&weights) {
            let vals = &lower.span_derivatives(span, mid + half * x, 0)[0];
            let offset = span - degree;
            for (ia, va) in vals.iter().enumerate() {
                for (ib, vb) in vals.iter().enumerate() {
                    gram[(offset + ia, offset + ib)] += w * half * va * vb;
                }
            }
        }
    }
    let l = gram.cholesky().expect("B-spline Gram matrix is positive definite").unpack();
    l.transpose() * diff
}

struct Solved {
    coefficients: DVector<f64>,
    hat_trace: f64,
    rss: f64,
    n: usize,
}

/// Solves `min ||y - Bc||^2 + lambda ||Ec||^2` by QR of the stacked system
/// `[B; sqrt(lambda) E]`.
fn solve(
    grid: &TimeGrid,
    values: &[f64],
    basis: &SplineBasis,
    lambda: f64,
) -> Result<Solved, SplineError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(SplineError::InvalidLambda(lambda));
    }
    if values.len() != grid.len() {
        return Err(SplineError::LengthMismatch { expected: grid.len(), found: values.len() });
    }
    let b = design_matrix(basis, grid)?;
    let n = b.nrows();
    let k = basis.n_basis();
    if lambda == 0.0 {
        let sv = b.clone().svd(false, false).singular_values;
        let tol = sv.max() * (n.max(k) as f64) * f64::EPSILON * 16.0;
        if n < k || sv.iter().any(|&s| s <= tol) {
            return Err(SplineError::SingularFit { lambda });
        }
    }
    let factor = if lambda > 0.0 { penalty_factor(basis) * lambda.sqrt() } else { DMatrix::zeros(0, k) };
    let rows = n + factor.nrows();
    if rows < k {
        return Err(SplineError::SingularFit { lambda });
    }
    let mut stacked = DMatrix::zeros(rows, k);
    stacked.view_mut((0, 0), (n, k)).copy_from(&b);
    stacked.view_mut((n, 0), (factor.nrows(), k)).copy_from(&factor);
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, n).copy_from_slice(values);

    let qr = stacked.qr();
    let r = qr.r();
    let diag = r.diagonal().abs();
    if diag.min() <= diag.max() * (rows as f64) * f64::EPSILON * 16.0 {
        return Err(SplineError::SingularFit { lambda });
    }
    let qty = qr.q().transpose() * &rhs;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(SplineError::SingularFit { lambda })?;
    // tr(S) = ||B R^-1||_F^2 since M'M = R'R.
    let w = r
        .transpose()
        .solve_lower_triangular(&b.transpose())
        .ok_or(SplineError::SingularFit { lambda })?;
    let y = DVector::from_column_slice(values);
    let residual = &y - &b * &coefficients;
    Ok(Solved { coefficients, hat_trace: w.norm_squared(), rss: residual.norm_squared(), n })
}

fn score(solved: &Solved) -> Result<f64, SplineError> {
    let n = solved.n as f64;
    let dof = n - solved.hat_trace;
    if dof <= 1e-8 * n {
        return Err(SplineError::UndefinedScore { trace: solved.hat_trace, n: solved.n });
    }
    Ok(n * solved.rss / (dof * dof))
}

/// Penalized least-squares fit of `values` observed at `grid`.
pub fn fit(
    grid: &TimeGrid,
    values: &[f64],
    basis: &SplineBasis,
    lambda: f64,
) -> Result<(FunctionalSample, SmoothingReport), SplineError> {
    let solved = solve(grid, values, basis, lambda)?;
    let report = SmoothingReport {
        lambda,
        gcv_score: score(&solved).ok(),
        hat_trace: solved.hat_trace,
        rss: solved.rss,
        n_obs: solved.n,
    };
    let sample = FunctionalSample::new(basis.clone(), solved.coefficients.as_slice().to_vec())?
        .with_source_grid(grid.clone());
    Ok((sample, report))
}

/// Generalized cross validation score `n * RSS / (n - tr(S))^2`.
pub fn gcv_score(
    grid: &TimeGrid,
    values: &[f64],
    basis: &SplineBasis,
    lambda: f64,
) -> Result<f64, SplineError> {
    score(&solve(grid, values, basis, lambda)?)
}

/// Picks the candidate with the smallest GCV score; exact ties go to the
/// smaller `lambda`. Candidates whose score is undefined are skipped.
pub fn select_lambda(
    grid: &TimeGrid,
    values: &[f64],
    basis: &SplineBasis,
    candidates: &[f64],
) -> Result<(f64, SmoothingReport), SplineError> {
    let mut best: Option<(f64, f64)> = None;
    for &lambda in candidates {
        let s = match gcv_score(grid, values, basis, lambda) {
            Ok(s) if s.is_finite() => s,
            Ok(_) | Err(SplineError::UndefinedScore { .. } | SplineError::SingularFit { .. }) => {
                continue
            }
            Err(e) => return Err(e),
        };
        let better = match best {
            None => true,
            Some((bl, bs)) => s < bs || (s == bs && lambda < bl),
        };
        if better {
            best = Some((lambda, s));
        }
    }
    let (lambda, _) = best.ok_or(SplineError::NoValidLambda)?;
    let (_, report) = fit(grid, values, basis, lambda)?;
    Ok((lambda, report))
}
