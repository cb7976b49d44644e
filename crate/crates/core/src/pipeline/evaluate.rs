use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::read_weights;
use crate::error::{Error, Result};
use crate::regress::r2;
use crate::stats::{wilcoxon_signed_rank, WilcoxonOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub r2: f64,
    pub rmse_g: f64,
    pub mean_target_g: f64,
}

/// Predictions paired with targets, in prediction file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Paired {
    pub ids: Vec<String>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl Paired {
    pub fn squared_residuals(&self) -> Vec<f64> {
        self.truth.iter().zip(&self.predicted).map(|(t, p)| (p - t) * (p - t)).collect()
    }
}

/// Reads an `id,value` CSV preserving row order.
fn read_ordered(path: &Path) -> Result<Vec<(String, f64)>> {
    let map = read_weights(path)?;
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::with_capacity(map.len());
    for rec in r.records() {
        let id = rec?.get(0).unwrap_or_default().to_string();
        out.push((id.clone(), map[&id]));
    }
    Ok(out)
}

/// Joins predictions and truth by id; both must cover the same ids.
pub fn pair(predictions: &Path, truth: &Path) -> Result<Paired> {
    let preds = read_ordered(predictions)?;
    let truth_map: HashMap<String, f64> = read_weights(truth)?;
    if preds.len() != truth_map.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} truth rows",
            preds.len(),
            truth_map.len()
        )));
    }
    let mut paired = Paired {
        ids: Vec::new(),
        truth: Vec::new(),
        predicted: Vec::new(),
    };
    for (id, p) in preds {
        let t = *truth_map
            .get(&id)
            .ok_or_else(|| Error::InvalidArgument(format!("no truth for id {id}")))?;
        paired.ids.push(id);
        paired.truth.push(t);
        paired.predicted.push(p);
    }
    Ok(paired)
}

pub fn metrics(p: &Paired) -> Result<Metrics> {
    let n = p.ids.len();
    let sq = p.squared_residuals();
    Ok(Metrics {
        n,
        r2: r2(&p.truth, &p.predicted)?,
        rmse_g: (sq.iter().sum::<f64>() / n as f64).sqrt(),
        mean_target_g: p.truth.iter().sum::<f64>() / n as f64,
    })
}

pub fn residuals_csv(p: &Paired) -> String {
    let mut s = String::from("id,truth_g,predicted_g,residual_g\n");
    for ((id, t), y) in p.ids.iter().zip(&p.truth).zip(&p.predicted) {
        let _ = writeln!(s, "{id},{t},{y},{}", y - t);
    }
    s
}

/// Wilcoxon test on the squared residuals of two prediction sets for the
/// same ids.
pub fn compare(a: &Paired, b: &Paired) -> Result<WilcoxonOutcome> {
    let index: HashMap<&str, usize> = b.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if a.ids.len() != b.ids.len() {
        return Err(Error::InvalidArgument("compared prediction sets differ in size".into()));
    }
    let sb = b.squared_residuals();
    let reordered = a
        .ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| sb[i])
                .ok_or_else(|| Error::InvalidArgument(format!("id {id} missing from compared set")))
        })
        .collect::<Result<Vec<f64>>>()?;
    wilcoxon_signed_rank(&a.squared_residuals(), &reordered)
}
