//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, f: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, f, |_, _| StandardNormal.sample(rng))
}

/// Linear target with Gaussian noise.
pub fn linear_target(rng: &mut ChaCha8Rng, x: &DMatrix<f64>, noise: f64) -> (Vec<f64>, Vec<f64>) {
    let beta: Vec<f64> = (0..x.ncols()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..x.nrows())
        .map(|i| {
            let s: f64 = (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum();
            let e: f64 = StandardNormal.sample(rng);
            5.0 + s + noise * e
        })
        .collect();
    (y, beta)
}

/// Column means and population standard deviations computed row by row.
pub fn column_stats(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = vec![0.0; x.ncols()];
    let mut sds = vec![0.0; x.ncols()];
    for j in 0..x.ncols() {
        let m = (0..x.nrows()).map(|i| x[(i, j)]).sum::<f64>() / n;
        let v = (0..x.nrows()).map(|i| (x[(i, j)] - m).powi(2)).sum::<f64>() / n;
        means[j] = m;
        sds[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    (means, sds)
}

pub fn standardize(x: &DMatrix<f64>, means: &[f64], sds: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - means[j]) / sds[j])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least squares by Householder QR; `a` must have full column rank.
pub fn qr_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb).expect("full column rank")
}

/// Ridge `min ‖y − ȳ − Zβ‖² + λ‖β‖²` on standardized columns, solved as the
/// augmented least-squares problem `[Z; √λ I] β ≈ [y − ȳ; 0]`.
pub fn ridge_predict(x: &DMatrix<f64>, y: &[f64], lambda: f64, query: &DMatrix<f64>) -> Vec<f64> {
    let (n, f) = x.shape();
    let (m, s) = column_stats(x);
    let z = standardize(x, &m, &s);
    let ybar = mean(y);
    let mut a = DMatrix::zeros(n + f, f);
    a.view_mut((0, 0), (n, f)).copy_from(&z);
    for j in 0..f {
        a[(n + j, j)] = lambda.sqrt();
    }
    let mut b = DVector::zeros(n + f);
    for i in 0..n {
        b[i] = y[i] - ybar;
    }
    let beta = qr_lstsq(&a, &b);
    let zq = standardize(query, &m, &s);
    (&zq * beta).iter().map(|v| v + ybar).collect()
}

/// Ordinary least squares with intercept on raw columns.
pub fn ols_predict(x: &DMatrix<f64>, y: &[f64], query: &DMatrix<f64>) -> Vec<f64> {
    let (n, f) = x.shape();
    let mut a = DMatrix::from_element(n, f + 1, 1.0);
    a.view_mut((0, 1), (n, f)).copy_from(x);
    let beta = qr_lstsq(&a, &DVector::from_column_slice(y));
    (0..query.nrows())
        .map(|i| beta[0] + (0..f).map(|j| beta[j + 1] * query[(i, j)]).sum::<f64>())
        .collect()
}

/// Largest violation of the optimality conditions of
/// `1/(2n)‖y − ȳ − Zβ‖² + λ‖β‖₁` at `beta`.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, y: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let (n, f) = x.shape();
    let (m, s) = column_stats(x);
    let z = standardize(x, &m, &s);
    let ybar = mean(y);
    let r: Vec<f64> = (0..n)
        .map(|i| y[i] - ybar - (0..f).map(|j| z[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    (0..f)
        .map(|j| {
            let g = (0..n).map(|i| z[(i, j)] * r[i]).sum::<f64>() / n as f64;
            if beta[j] > 0.0 {
                (g - lambda).abs()
            } else if beta[j] < 0.0 {
                (g + lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// k nearest neighbors by a full scan over standardized training rows.
pub fn knn_brute_force(
    x: &DMatrix<f64>,
    y: &[f64],
    query: &DMatrix<f64>,
    k: usize,
    distance_weighted: bool,
    p: u32,
) -> Vec<f64> {
    let (m, s) = column_stats(x);
    let z = standardize(x, &m, &s);
    let zq = standardize(query, &m, &s);
    let dist = |a: usize, q: usize| -> f64 {
        let terms = (0..z.ncols()).map(|j| (z[(a, j)] - zq[(q, j)]).abs());
        match p {
            1 => terms.sum(),
            2 => terms.map(|d| d * d).sum::<f64>().sqrt(),
            _ => terms.map(|d| d.powi(p as i32)).sum::<f64>().powf(1.0 / p as f64),
        }
    };
    (0..zq.nrows())
        .map(|q| {
            let mut all: Vec<(f64, usize)> = (0..z.nrows()).map(|a| (dist(a, q), a)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nn = &all[..k];
            let exact: Vec<&(f64, usize)> = nn.iter().filter(|e| e.0 == 0.0).collect();
            if !distance_weighted {
                nn.iter().map(|e| y[e.1]).sum::<f64>() / k as f64
            } else if !exact.is_empty() {
                exact.iter().map(|e| y[e.1]).sum::<f64>() / exact.len() as f64
            } else {
                let num: f64 = nn.iter().map(|e| y[e.1] / e.0).sum();
                let den: f64 = nn.iter().map(|e| 1.0 / e.0).sum();
                num / den
            }
        })
        .collect()
}

/// Two-sided signed-rank p-value by enumerating all sign patterns of the
/// nonzero differences.
pub fn wilcoxon_enumerated(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let ranks: Vec<f64> = d
        .iter()
        .map(|v| {
            let below = d.iter().filter(|w| w.abs() < v.abs()).count() as f64;
            let equal = d.iter().filter(|w| w.abs() == v.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let observed = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for pattern in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| pattern >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s.min(total - s) <= observed + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Sparse planted regression: `informative` columns carry signal, the rest
/// are noise. Returns the features, targets and the informative indices.
pub fn planted_problem(seed: u64, n: usize, f: usize, informative: usize, noise: f64) -> (DMatrix<f64>, Vec<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, n, f);
    let mut cols: Vec<usize> = (0..f).collect();
    for i in 0..informative {
        let j = r.random_range(i..f);
        cols.swap(i, j);
    }
    let mut chosen = cols[..informative].to_vec();
    chosen.sort_unstable();
    let y = (0..n)
        .map(|i| {
            let s: f64 = chosen.iter().enumerate().map(|(t, &j)| (1.0 + 0.25 * t as f64) * x[(i, j)]).sum();
            let e: f64 = StandardNormal.sample(&mut r);
            s + noise * e
        })
        .collect();
    (x, y, chosen)
}
