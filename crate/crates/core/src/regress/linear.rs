use nalgebra::{DMatrix, DVector};

use super::Parameters;
use crate::error::{Error, Result};

fn centered(y: &DVector<f64>) -> (DVector<f64>, f64) {
    let mean = y.mean();
    (y.add_scalar(-mean), mean)
}

/// Householder QR with column pivoting by largest remaining norm,
/// stopped at numerical rank. Returns the leading `r × F` block of `R`
/// (columns in pivot order), `Qᵀy` restricted to its first `r` entries,
/// and the pivot order.
fn pivoted_qr(z: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let (n, f) = z.shape();
    let mut a = z.clone();
    let mut qty = y.clone();
    let mut perm: Vec<usize> = (0..f).collect();
    let steps = n.min(f);
    let mut rank = 0;
    let mut tol = 0.0;
    for k in 0..steps {
        let (p, best) = (k..f)
            .map(|j| (j, a.column(j).rows(k, n - k).norm_squared()))
            .fold((k, -1.0), |m, c| if c.1 > m.1 { c } else { m });
        let norm = best.sqrt();
        if k == 0 {
            tol = n.max(f) as f64 * f64::EPSILON * norm;
        }
        if norm <= tol || norm == 0.0 {
            break;
        }
        a.swap_columns(k, p);
        perm.swap(k, p);
        let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
        let mut v = a.column(k).rows(k, n - k).into_owned();
        v[0] -= alpha;
        let vv = v.norm_squared();
        if vv > 0.0 {
            let scale = 2.0 / vv;
            for j in k + 1..f {
                let mut col = a.column_mut(j);
                let mut col = col.rows_mut(k, n - k);
                let d = scale * v.dot(&col);
                col.axpy(-d, &v, 1.0);
            }
            let mut tail = qty.rows_mut(k, n - k);
            let d = scale * v.dot(&tail);
            tail.axpy(-d, &v, 1.0);
        }
        a[(k, k)] = alpha;
        rank = k + 1;
    }
    let mut r = a.rows(0, rank).into_owned();
    r.fill_lower_triangle(0.0, 1);
    (r, qty.rows(0, rank).into_owned(), perm)
}

/// Minimum-norm least squares through a complete orthogonal
/// decomposition: a column-pivoted QR reveals the rank `r` with the
/// relative cutoff `max(n, F)·ε·‖z_max‖`, and for `r < F` a second QR of
/// the leading rows gives the minimum-norm solution.
pub(super) fn min_norm_lstsq(z: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let f = z.ncols();
    let (r, c, perm) = pivoted_qr(z, y);
    let rank = c.len();
    let mut beta = DVector::zeros(f);
    if rank == 0 {
        return beta;
    }
    let w = if rank == f {
        r.solve_upper_triangular(&c).expect("nonzero pivots up to the rank")
    } else {
        let qr = r.transpose().qr();
        let u = qr
            .r()
            .transpose()
            .solve_lower_triangular(&c)
            .expect("full row rank block");
        qr.q() * u
    };
    for (k, &j) in perm.iter().enumerate() {
        beta[j] = w[k];
    }
    beta
}

pub(super) fn ols(z: &DMatrix<f64>, y: &DVector<f64>, fit_intercept: bool) -> Parameters {
    let (target, intercept) = if fit_intercept { centered(y) } else { (y.clone(), 0.0) };
    let beta = min_norm_lstsq(z, &target);
    Parameters::Linear {
        coefficients: beta.iter().copied().collect(),
        intercept,
    }
}

/// Ridge on centered columns with an unpenalized intercept:
/// `β = (ZᵀZ + λI)⁻¹ Zᵀ y`, or the equivalent dual form when `F > n`.
pub(super) fn ridge(z: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Parameters> {
    let (n, f) = z.shape();
    let (yc, intercept) = centered(y);
    let fail = || Error::NumericalFailure(format!("ridge system not positive definite (lambda {lambda})"));
    let beta = if f <= n {
        let mut g = z.tr_mul(z);
        for i in 0..f {
            g[(i, i)] += lambda;
        }
        g.cholesky().ok_or_else(fail)?.solve(&z.tr_mul(&yc))
    } else {
        let mut k = z * z.transpose();
        for i in 0..n {
            k[(i, i)] += lambda;
        }
        z.tr_mul(&k.cholesky().ok_or_else(fail)?.solve(&yc))
    };
    Ok(Parameters::Linear {
        coefficients: beta.iter().copied().collect(),
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svd_min_norm(z: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let svd = z.clone().svd(true, true);
        let tol = 1e-10 * svd.singular_values.max();
        svd.solve(y, tol).unwrap()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn matches_svd_on_tall_wide_and_deficient() {
        let mut s = 7u64;
        for (n, f, rank) in [(12, 4, 4), (6, 15, 6), (10, 10, 3), (9, 20, 5), (20, 8, 2), (1, 3, 1)] {
            let a = DMatrix::from_fn(n, rank, |_, _| lcg(&mut s));
            let b = DMatrix::from_fn(rank, f, |_, _| lcg(&mut s));
            let z = a * b;
            let y = DVector::from_fn(n, |_, _| lcg(&mut s));
            let got = min_norm_lstsq(&z, &y);
            let want = svd_min_norm(&z, &y);
            assert!((got - want).amax() < 1e-9, "{n}x{f} rank {rank}");
        }
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let z = DMatrix::zeros(4, 3);
        let y = DVector::from_element(4, 1.0);
        assert_eq!(min_norm_lstsq(&z, &y), DVector::zeros(3));
    }
}
