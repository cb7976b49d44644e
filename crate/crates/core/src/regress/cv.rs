use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_dense, predict_dense, r2, RegressorSpec};
use crate::error::{Error, Result, ResultExt};
use crate::seeds;

/// Repeated k-fold protocol. Fold assignment depends only on the seed, the
/// repeat index and the row count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CVProtocol {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CVProtocol {
    fn default() -> Self {
        CVProtocol {
            folds: 5,
            repeats: 20,
            seed: 0,
        }
    }
}

impl CVProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.repeats < 1 {
            return Err(Error::InvalidArgument("need at least one repeat".into()));
        }
        Ok(())
    }
}

/// Outcome of a repeated k-fold evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub protocol: CVProtocol,
    /// r² of every held-out fold, repeat-major.
    pub fold_r2: Vec<f64>,
    /// Out-of-fold predictions, `[repeat][row]`.
    pub predictions: Vec<Vec<f64>>,
    /// Squared residuals, `[repeat][row]`.
    pub squared_residuals: Vec<Vec<f64>>,
    pub mean_r2: f64,
    /// Population standard deviation of `fold_r2`.
    pub std_r2: f64,
}

impl CVResult {
    pub fn n_samples(&self) -> usize {
        self.predictions.first().map_or(0, Vec::len)
    }

    /// Per-sample squared residual averaged over repeats.
    pub fn mean_squared_residuals(&self) -> Vec<f64> {
        let n = self.n_samples();
        let r = self.squared_residuals.len() as f64;
        (0..n)
            .map(|i| self.squared_residuals.iter().map(|rep| rep[i]).sum::<f64>() / r)
            .collect()
    }

    /// Root mean squared out-of-fold error over all repeats.
    pub fn rmse(&self) -> f64 {
        let all: Vec<f64> = self.squared_residuals.iter().flatten().copied().collect();
        (all.iter().sum::<f64>() / all.len() as f64).sqrt()
    }
}

/// Test folds of repeat `repeat`: rows shuffled by a generator seeded from
/// `(seed, repeat)`, then cut into `folds` contiguous parts whose sizes
/// differ by at most one (the larger ones first).
pub fn fold_assignment(n_rows: usize, protocol: &CVProtocol, repeat: usize) -> Result<Vec<Vec<usize>>> {
    protocol.validate()?;
    if n_rows < protocol.folds {
        return Err(Error::InvalidArgument(format!(
            "{n_rows} rows cannot fill {} folds",
            protocol.folds
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = seeds::rng(seeds::derive(protocol.seed, &[repeat as u64]));
    order.shuffle(&mut rng);
    let (base, extra) = (n_rows / protocol.folds, n_rows % protocol.folds);
    let mut folds = Vec::with_capacity(protocol.folds);
    let mut start = 0;
    for f in 0..protocol.folds {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

pub fn repeated_kfold(spec: &RegressorSpec, x: &DMatrix<f64>, y: &[f64], protocol: &CVProtocol) -> Result<CVResult> {
    let all: Vec<usize> = (0..x.ncols()).collect();
    repeated_kfold_columns(spec, x, y, &all, protocol)
}

/// Repeated k-fold restricted to the listed columns of `x`.
pub fn repeated_kfold_columns(
    spec: &RegressorSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    columns: &[usize],
    protocol: &CVProtocol,
) -> Result<CVResult> {
    protocol.validate()?;
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("{} targets for {n} rows", y.len())));
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= x.ncols()) {
        return Err(Error::InvalidArgument(format!("column {c} out of range")));
    }
    let sub = x.select_columns(columns);
    let mut fold_r2 = Vec::with_capacity(protocol.folds * protocol.repeats);
    let mut predictions = Vec::with_capacity(protocol.repeats);
    let mut squared_residuals = Vec::with_capacity(protocol.repeats);
    let mut in_test = vec![false; n];
    for rep in 0..protocol.repeats {
        let folds = fold_assignment(n, protocol, rep)?;
        let mut pred = vec![f64::NAN; n];
        for (fi, test) in folds.iter().enumerate() {
            in_test.iter_mut().for_each(|b| *b = false);
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let xtr = sub.select_rows(&train);
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let (st, params) =
                fit_dense(spec, &xtr, &ytr).with_context(|| format!("repeat {rep}, fold {fi}"))?;
            let yhat = predict_dense(spec, &st, &params, &sub.select_rows(test));
            let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            fold_r2.push(r2(&yte, &yhat).with_context(|| format!("repeat {rep}, fold {fi}"))?);
            for (&i, &p) in test.iter().zip(&yhat) {
                pred[i] = p;
            }
        }
        squared_residuals.push(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).collect());
        predictions.push(pred);
    }
    let m = fold_r2.len() as f64;
    let mean_r2 = fold_r2.iter().sum::<f64>() / m;
    let std_r2 = (fold_r2.iter().map(|v| (v - mean_r2) * (v - mean_r2)).sum::<f64>() / m).sqrt();
    Ok(CVResult {
        protocol: *protocol,
        fold_r2,
        predictions,
        squared_residuals,
        mean_r2,
        std_r2,
    })
}
