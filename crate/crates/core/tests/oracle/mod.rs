//! Independent reference computations for tests.
//!
//! Nothing here calls into `fsens_core`: matrices are plain nested vectors,
//! B-splines come from the textbook Cox-de Boor recursion, and the
//! permutation test is recomputed from scratch.
#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

// ---------------------------------------------------------------------------
// B-splines

/// Cox-de Boor recursion for basis function `i` of degree `p`.
pub fn bspline(knots: &[f64], i: usize, p: usize, t: f64) -> f64 {
    if p == 0 {
        let last = *knots.last().unwrap();
        if knots[i] <= t && t < knots[i + 1] {
            return 1.0;
        }
        // Close the final non-empty span on the right.
        if t == last && knots[i] < knots[i + 1] && knots[i + 1] == last {
            return 1.0;
        }
        return 0.0;
    }
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += (t - knots[i]) / d1 * bspline(knots, i, p - 1, t);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + p + 1] - t) / d2 * bspline(knots, i + 1, p - 1, t);
    }
    v
}

/// `order`-th derivative via the difference-of-lower-degree formula.
pub fn bspline_deriv(knots: &[f64], i: usize, p: usize, t: f64, order: usize) -> f64 {
    if order == 0 {
        return bspline(knots, i, p, t);
    }
    if p == 0 {
        return 0.0;
    }
    let pf = p as f64;
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += pf / d1 * bspline_deriv(knots, i, p - 1, t, order - 1);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v -= pf / d2 * bspline_deriv(knots, i + 1, p - 1, t, order - 1);
    }
    v
}

/// Composite Simpson quadrature of second-derivative products. With
/// `intervals` a multiple of `2 * (number of knot spans)` every Simpson
/// panel stays inside one span.
pub fn simpson_penalty(knots: &[f64], p: usize, n_basis: usize, intervals: usize) -> Mat {
    assert!(intervals % 2 == 0);
    let a = knots[0];
    let b = *knots.last().unwrap();
    let h = (b - a) / intervals as f64;
    let mut r = vec![vec![0.0; n_basis]; n_basis];
    for k in 0..=intervals {
        // Evaluate just inside the panel to stay on the correct side of knots.
        let t = a + k as f64 * h;
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let d2: Vec<f64> = (0..n_basis).map(|i| bspline_deriv(knots, i, p, t, 2)).collect();
        for i in 0..n_basis {
            if d2[i] == 0.0 {
                continue;
            }
            for j in 0..n_basis {
                r[i][j] += w * h / 3.0 * d2[i] * d2[j];
            }
        }
    }
    r
}

pub fn basis_matrix(knots: &[f64], p: usize, n_basis: usize, ts: &[f64]) -> Mat {
    ts.iter().map(|&t| (0..n_basis).map(|i| bspline(knots, i, p, t)).collect()).collect()
}

// ---------------------------------------------------------------------------
// Dense linear algebra

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return vec![];
    }
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect()
        })
        .collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

pub fn add_scaled(a: &Mat, b: &Mat, s: f64) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + s * y).collect())
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().partial_cmp(&aug[y][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Smoother matrix `B (B'B + lambda R)^-1 B'`.
pub fn hat_matrix(b: &Mat, r: &Mat, lambda: f64) -> Mat {
    let bt = transpose(b);
    let inv = invert(&add_scaled(&matmul(&bt, b), r, lambda));
    matmul(&matmul(b, &inv), &bt)
}

pub fn gcv_from_hat(y: &[f64], s: &Mat) -> f64 {
    let n = y.len() as f64;
    let fitted = matvec(s, y);
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let tr: f64 = (0..s.len()).map(|i| s[i][i]).sum();
    n * rss / (n - tr).powi(2)
}

/// Ordinary least-squares straight line; returns `(intercept, slope)`.
pub fn ols_line(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    let slope = sxy / sxx;
    (ym - slope * tm, slope)
}

/// Least-squares coefficients `(X'X)^-1 X'y`.
pub fn ols(x: &Mat, y: &[f64]) -> Vec<f64> {
    let xt = transpose(x);
    let inv = invert(&matmul(&xt, x));
    matvec(&inv, &matvec(&xt, y))
}

// ---------------------------------------------------------------------------
// Seeded permutation stream, re-derived from its published definition:
// every observation carries an identity hash; replicate `b` orders
// observations by `mix(mix(seed ^ mix(b)) ^ identity)`.

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// For replicate `b`, row `r` receives the residual of row `source[r]`.
pub fn permutation(seed: u64, b: u64, ids: &[u64]) -> Vec<usize> {
    let n = ids.len();
    let base = mix(seed ^ mix(b));
    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by_key(|&r| (ids[r], r));
    let mut shuffled = canonical.clone();
    shuffled.sort_by_key(|&r| (mix(base ^ ids[r]), ids[r], r));
    let mut source = vec![0; n];
    for (k, &r) in canonical.iter().enumerate() {
        source[r] = shuffled[k];
    }
    source
}

pub struct IwtOracle {
    pub unadjusted: Vec<f64>,
    pub adjusted: Vec<f64>,
    /// `(start, end, p)` for every contiguous interval.
    pub intervals: Vec<(usize, usize, f64)>,
}

/// Squared t-statistic of column `col` at every grid point; `y[n][k]`.
fn squared_t(x: &Mat, y: &Mat, col: usize) -> Vec<f64> {
    let n = x.len();
    let q = x[0].len();
    let inv = invert(&matmul(&transpose(x), x));
    let g = y[0].len();
    (0..g)
        .map(|k| {
            let yk: Vec<f64> = (0..n).map(|r| y[r][k]).collect();
            let beta = ols(x, &yk);
            let fitted = matvec(x, &beta);
            let rss: f64 = yk.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
            let s2 = rss / (n - q) as f64;
            let num = beta[col];
            let den2 = s2 * inv[col][col];
            if den2 == 0.0 {
                if num == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                let t = num / den2.sqrt();
                t * t
            }
        })
        .collect()
}

/// Interval-wise test of `coef[col] = 0` with Freedman-Lane residual
/// permutation, computed by brute force.
pub fn iwt(x: &Mat, y: &Mat, col: usize, b_perm: usize, seed: u64, ids: &[u64]) -> IwtOracle {
    let n = x.len();
    let g = y[0].len();
    // Reduced model: drop the tested column.
    let reduced: Mat = x
        .iter()
        .map(|row| row.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, v)| *v).collect())
        .collect();
    let mut fitted0 = vec![vec![0.0; g]; n];
    let mut resid0 = vec![vec![0.0; g]; n];
    for k in 0..g {
        let yk: Vec<f64> = (0..n).map(|r| y[r][k]).collect();
        let f = matvec(&reduced, &ols(&reduced, &yk));
        for r in 0..n {
            fitted0[r][k] = f[r];
            resid0[r][k] = yk[r] - f[r];
        }
    }
    let observed = squared_t(x, y, col);
    let permuted: Vec<Vec<f64>> = (0..b_perm as u64)
        .map(|b| {
            let src = permutation(seed, b, ids);
            let ystar: Mat = (0..n)
                .map(|r| (0..g).map(|k| fitted0[r][k] + resid0[src[r]][k]).collect())
                .collect();
            squared_t(x, &ystar, col)
        })
        .collect();
    let mean = |w: &[f64], s: usize, e: usize| {
        let mut acc = 0.0;
        for v in &w[s..=e] {
            acc += v;
        }
        acc / (e - s + 1) as f64
    };
    let mut intervals = vec![];
    for s in 0..g {
        for e in s..g {
            let obs = mean(&observed, s, e);
            // Replicates within a relative 1e-10 of the observed value tie.
            let obs = if obs.is_finite() { obs - 1e-10 * obs.abs() } else { obs };
            let hits = permuted.iter().filter(|w| mean(w, s, e) >= obs).count();
            intervals.push((s, e, (1 + hits) as f64 / (b_perm + 1) as f64));
        }
    }
    let unadjusted: Vec<f64> = (0..g)
        .map(|k| intervals.iter().find(|(s, e, _)| *s == k && *e == k).unwrap().2)
        .collect();
    let adjusted: Vec<f64> = (0..g)
        .map(|k| {
            intervals
                .iter()
                .filter(|(s, e, _)| *s <= k && k <= *e)
                .map(|(_, _, p)| *p)
                .fold(0.0, f64::max)
        })
        .collect();
    IwtOracle { unadjusted, adjusted, intervals }
}
