use nalgebra::{DMatrix, DVector};

use super::Parameters;

/// Univariate PLS by NIPALS on centered data. Stops early when the
/// remaining covariance vanishes.
pub(super) fn pls1(z: &DMatrix<f64>, y: &DVector<f64>, n_components: usize) -> Parameters {
    let intercept = y.mean();
    let mut x = z.clone();
    let mut yr = y.add_scalar(-intercept);
    let f = z.ncols();
    let mut ws: Vec<DVector<f64>> = Vec::new();
    let mut ps: Vec<DVector<f64>> = Vec::new();
    let mut qs: Vec<f64> = Vec::new();
    let first_cov = z.tr_mul(&yr).norm();
    for _ in 0..n_components {
        let mut w = x.tr_mul(&yr);
        let wn = w.norm();
        if !(wn > 1e-12 * first_cov) {
            break;
        }
        w /= wn;
        let t = &x * &w;
        let tt = t.norm_squared();
        if !(tt > 0.0) {
            break;
        }
        let p = x.tr_mul(&t) / tt;
        let q = yr.dot(&t) / tt;
        x -= &t * p.transpose();
        yr.axpy(-q, &t, 1.0);
        ws.push(w);
        ps.push(p);
        qs.push(q);
    }
    let a = ws.len();
    let coefficients = if a == 0 {
        vec![0.0; f]
    } else {
        let w = DMatrix::from_columns(&ws);
        let p = DMatrix::from_columns(&ps);
        let q = DVector::from_vec(qs);
        // β = W (PᵀW)⁻¹ q; PᵀW is upper triangular for NIPALS.
        let ptw = p.tr_mul(&w);
        let c = ptw
            .solve_upper_triangular(&q)
            .unwrap_or_else(|| DVector::zeros(a));
        (w * c).iter().copied().collect()
    };
    Parameters::Linear {
        coefficients,
        intercept,
    }
}
