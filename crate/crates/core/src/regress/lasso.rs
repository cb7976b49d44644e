use nalgebra::{DMatrix, DVector};

use super::Parameters;
use crate::error::{Error, Result};

/// Convergence threshold on the largest coefficient change in a sweep.
pub const LASSO_TOLERANCE: f64 = 1e-6;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Step towards the exact minimizer on the active set `A` for fixed signs
/// `s`, `(Z_AᵀZ_A/n) β_A = Z_Aᵀy/n − λ s`. If a coefficient would change
/// sign, the step stops where the first one reaches zero and that
/// coefficient is dropped. Up to that point the penalty is linear, so the
/// objective cannot increase. Returns `None` when the system is singular.
fn polish(z: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() || active.len() >= z.nrows() {
        return None;
    }
    let nf = z.nrows() as f64;
    let za = z.select_columns(&active);
    let gram = za.tr_mul(&za) / nf;
    let mut rhs = za.tr_mul(y) / nf;
    for (r, &j) in rhs.iter_mut().zip(&active) {
        *r -= lambda * beta[j].signum();
    }
    let sol = gram.cholesky()?.solve(&rhs);
    if sol.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let mut t = 1.0f64;
    let mut crossing = None;
    for (&j, &b) in active.iter().zip(sol.iter()) {
        if b.signum() != beta[j].signum() {
            let tj = beta[j] / (beta[j] - b);
            if tj < t {
                t = tj;
                crossing = Some(j);
            }
        }
    }
    let mut out = vec![0.0; beta.len()];
    for (&j, &b) in active.iter().zip(sol.iter()) {
        out[j] = beta[j] + t * (b - beta[j]);
    }
    if let Some(j) = crossing {
        out[j] = 0.0;
    }
    Some(out)
}

/// Homotopy (LARS with the lasso modification) for the same objective in
/// quadratic form, `G = ZᵀZ/n`, `c = Zᵀy/n`. Follows the piecewise linear
/// solution path from the smallest λ that zeroes every coefficient down to
/// `lambda`, adding a column when its correlation reaches the current λ
/// and removing one when its coefficient crosses zero. Returns `None` on a
/// singular active system or when the step limit is hit.
fn homotopy(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64) -> Option<Vec<f64>> {
    let f = c.len();
    let mut beta = vec![0.0; f];
    let first = c.iamax();
    let mut level = c[first].abs();
    if lambda >= level {
        return Some(beta);
    }
    let mut active = vec![first];
    let mut dropped: Option<usize> = None;
    for _ in 0..8 * f + 16 {
        let corr = c - gram * DVector::from_column_slice(&beta);
        let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| corr[j].signum()));
        let ga = gram.select_rows(&active).select_columns(&active);
        let d = ga.cholesky()?.solve(&signs);
        if d.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let rate = gram.select_columns(&active) * &d;
        let mut step = level - lambda;
        let mut event: Option<(usize, bool)> = None;
        for j in 0..f {
            if active.contains(&j) || dropped == Some(j) {
                continue;
            }
            for (num, den) in [(level - corr[j], 1.0 - rate[j]), (level + corr[j], 1.0 + rate[j])] {
                if den > 1e-12 {
                    let g = num / den;
                    if g > 1e-15 && g < step {
                        step = g;
                        event = Some((j, true));
                    }
                }
            }
        }
        for (t, &j) in active.iter().enumerate() {
            let g = -beta[j] / d[t];
            if g > 1e-15 && g < step {
                step = g;
                event = Some((j, false));
            }
        }
        for (t, &j) in active.iter().enumerate() {
            beta[j] += step * d[t];
        }
        level -= step;
        dropped = None;
        match event {
            None => return Some(beta),
            Some((j, true)) => active.push(j),
            Some((j, false)) => {
                beta[j] = 0.0;
                active.retain(|&k| k != j);
                dropped = Some(j);
                if active.is_empty() {
                    return None;
                }
            }
        }
    }
    None
}

/// Active-set sweeps between two full sweeps.
const ACTIVE_SWEEPS: usize = 50;
/// Path points per decade of λ below the smallest λ that zeroes everything.
const PATH_PER_DECADE: f64 = 4.0;
/// Warm-start points are solved loosely with a small budget.
const PATH_TOLERANCE: f64 = 1e-4;
const PATH_SWEEPS: usize = 200;

struct Solver<'a> {
    z: &'a DMatrix<f64>,
    yc: DVector<f64>,
    norms: Vec<f64>,
    nf: f64,
    beta: Vec<f64>,
    r: DVector<f64>,
    sweeps: usize,
}

impl Solver<'_> {
    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        if self.norms[j] == 0.0 {
            return 0.0;
        }
        let col = self.z.column(j);
        let old = self.beta[j];
        let rho = col.dot(&self.r) / self.nf + self.norms[j] * old;
        let new = soft_threshold(rho, lambda) / self.norms[j];
        let delta = new - old;
        if delta != 0.0 {
            self.r.axpy(-delta, &col, 1.0);
            self.beta[j] = new;
        }
        delta.abs()
    }

    fn objective(&self, beta: &[f64], r: &DVector<f64>, lambda: f64) -> f64 {
        r.norm_squared() / (2.0 * self.nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Runs until a full sweep moves no coefficient by more than
    /// `tolerance`; returns the last full-sweep change on failure.
    fn solve(&mut self, lambda: f64, tolerance: f64, max_sweeps: usize) -> std::result::Result<(), f64> {
        let f = self.beta.len();
        let mut last = f64::INFINITY;
        self.sweeps = 0;
        while self.sweeps < max_sweeps {
            self.sweeps += 1;
            last = (0..f).fold(0.0f64, |m, j| m.max(self.update(j, lambda)));
            if last < tolerance {
                return Ok(());
            }
            if let Some(candidate) = polish(self.z, &self.yc, &self.beta, lambda) {
                let rc = &self.yc - self.z * DVector::from_column_slice(&candidate);
                if self.objective(&candidate, &rc, lambda) <= self.objective(&self.beta, &self.r, lambda) {
                    self.beta = candidate;
                    self.r = rc;
                    continue;
                }
            }
            let active: Vec<usize> = (0..f).filter(|&j| self.beta[j] != 0.0).collect();
            for _ in 0..ACTIVE_SWEEPS {
                if self.sweeps >= max_sweeps {
                    break;
                }
                self.sweeps += 1;
                let d = active.iter().fold(0.0f64, |m, &j| m.max(self.update(j, lambda)));
                if d < tolerance {
                    break;
                }
            }
        }
        Err(last)
    }
}

/// Cyclic coordinate descent on `(1/2n)‖y − Zβ‖² + λ‖β‖₁` with centered
/// columns; the intercept is the target mean and never penalized.
///
/// Plain coordinate descent crawls on strongly correlated columns, so the
/// descent starts from the homotopy solution, which it then only has to
/// confirm. If the homotopy fails, the start comes from a warm-started
/// sequence of decreasing λ instead. At each λ, full sweeps alternate with
/// bounded sweeps over the nonzero coefficients, and after each full sweep
/// the active set is moved towards its exact solution for the current
/// signs when that lowers the objective. Convergence is declared only
/// after a full sweep whose largest coefficient change is below
/// [`LASSO_TOLERANCE`], within [`LASSO_MAX_SWEEPS`] sweeps at the
/// requested λ.
pub(super) fn lasso(z: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Parameters> {
    let (n, f) = z.shape();
    let nf = n as f64;
    let intercept = y.mean();
    let yc = y.add_scalar(-intercept);
    let lambda_max = z.tr_mul(&yc).amax() / nf;
    let mut path = Vec::new();
    if lambda < lambda_max {
        let steps = ((lambda_max / lambda).log10() * PATH_PER_DECADE).ceil() as usize;
        path.extend((1..steps).map(|k| lambda_max * (lambda / lambda_max).powf(k as f64 / steps as f64)));
    }
    let mut solver = Solver {
        z,
        norms: z.column_iter().map(|c| c.norm_squared() / nf).collect(),
        nf,
        beta: vec![0.0; f],
        r: yc.clone(),
        yc,
        sweeps: 0,
    };
    let gram = z.tr_mul(z) / nf;
    let c = z.tr_mul(&solver.yc) / nf;
    match homotopy(&gram, &c, lambda) {
        Some(beta) => {
            solver.r = &solver.yc - z * DVector::from_column_slice(&beta);
            solver.beta = beta;
        }
        None => {
            for &l in &path {
                let _ = solver.solve(l, PATH_TOLERANCE, PATH_SWEEPS);
            }
        }
    }
    if let Err(last) = solver.solve(lambda, LASSO_TOLERANCE, LASSO_MAX_SWEEPS) {
        return Err(Error::NumericalFailure(format!(
            "lasso did not converge in {LASSO_MAX_SWEEPS} sweeps (lambda {lambda}, last max change {last:e})"
        )));
    }
    Ok(Parameters::Linear {
        coefficients: solver.beta,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_lambda_zeroes_everything() {
        let z = DMatrix::from_fn(6, 2, |i, j| [[-1.0, 0.5], [0.0, -1.0], [1.0, 0.5], [-1.0, 1.0], [0.0, 0.0], [1.0, -1.0]][i][j]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 1.5, 2.0, 2.5]);
        let yc = y.add_scalar(-y.mean());
        let thresh = z.tr_mul(&yc).amax() / 6.0;
        let Parameters::Linear { coefficients, intercept } = lasso(&z, &y, thresh * 1.0001).unwrap() else {
            unreachable!()
        };
        assert!(coefficients.iter().all(|&b| b == 0.0));
        assert!((intercept - 2.0).abs() < 1e-12);
    }
}
