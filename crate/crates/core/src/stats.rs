//! Wilcoxon signed-rank test for paired residual comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::CVResult;

/// Largest effective sample size evaluated exactly.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOutcome {
    /// `min(W⁺, W⁻)`.
    pub w_statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Number of nonzero differences.
    pub n_effective: usize,
    pub p_two_sided: f64,
    pub method: WilcoxonMethod,
    /// Set when every difference is zero; `p` is then 1.
    pub degenerate: bool,
}

/// Average ranks of `values` (ascending), doubled so that tied ranks stay
/// integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share rank ((i+1) + (j+1)) / 2.
        let doubled = (i + j + 2) as u64;
        for &o in &order[i..=j] {
            ranks[o] = doubled;
        }
        i = j + 1;
    }
    ranks
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided test of `a − b` against a distribution symmetric about zero.
///
/// Zero differences are discarded. For at most [`EXACT_MAX_N`] nonzero
/// differences the p-value is the fraction of the `2^n` sign assignments
/// whose statistic is at most the observed one, counted by dynamic
/// programming over rank sums; beyond that the tie-corrected normal
/// approximation with continuity correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonOutcome> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("paired samples are empty".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidArgument("paired samples contain NaN".into()));
    }
    let nonzero: Vec<f64> = diffs.into_iter().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(WilcoxonOutcome {
            w_statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n_effective: 0,
            p_two_sided: 1.0,
            method: WilcoxonMethod::Exact,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let total: u64 = ranks.iter().sum();
    let plus: u64 = ranks.iter().zip(&nonzero).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();
    let minus = total - plus;
    let w = plus.min(minus);

    let (p, method) = if n <= EXACT_MAX_N {
        // counts[s] = number of sign assignments with doubled W⁺ = s.
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let hits: u64 = counts
            .iter()
            .enumerate()
            .filter(|&(s, _)| (s as u64).min(total - s as u64) <= w)
            .map(|(_, &c)| c)
            .sum();
        (hits as f64 / (1u64 << n) as f64, WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        let wf = w as f64 / 2.0;
        let p = if var > 0.0 {
            let z = (wf - mean + 0.5).min(0.0) / var.sqrt();
            (2.0 * normal_cdf(z)).min(1.0)
        } else {
            1.0
        };
        (p, WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonOutcome {
        w_statistic: w as f64 / 2.0,
        w_plus: plus as f64 / 2.0,
        w_minus: minus as f64 / 2.0,
        n_effective: n,
        p_two_sided: p.clamp(0.0, 1.0),
        method,
        degenerate: false,
    })
}

/// Pairs the per-sample squared residuals of two evaluations (averaged
/// over repeats) and tests their difference.
pub fn compare_pipelines(a: &CVResult, b: &CVResult) -> Result<WilcoxonOutcome> {
    if a.protocol != b.protocol {
        return Err(Error::InvalidArgument(
            "compared evaluations use different protocols".into(),
        ));
    }
    if a.n_samples() != b.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "compared evaluations cover {} and {} samples",
            a.n_samples(),
            b.n_samples()
        )));
    }
    wilcoxon_signed_rank(&a.mean_squared_residuals(), &b.mean_squared_residuals())
}
