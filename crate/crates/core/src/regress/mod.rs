//! Regressors, the r² score and repeated k-fold cross-validation.
//!
//! Every kind standardizes its input columns with training statistics
//! before fitting; the fitted model stores those statistics and applies
//! them at prediction time.

mod cv;
mod knn;
mod lasso;
mod linear;
mod pls;

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{fold_assignment, repeated_kfold, repeated_kfold_columns, CVProtocol, CVResult};
pub use lasso::{LASSO_MAX_SWEEPS, LASSO_TOLERANCE};

/// Distance weighting of neighbor targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    Distance,
}

/// The regressor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Linear,
    Pls,
    Lasso,
    Ridge,
    Knn,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 5] = [
        RegressorKind::Linear,
        RegressorKind::Pls,
        RegressorKind::Lasso,
        RegressorKind::Ridge,
        RegressorKind::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Linear => "linear",
            RegressorKind::Pls => "pls",
            RegressorKind::Lasso => "lasso",
            RegressorKind::Ridge => "ridge",
            RegressorKind::Knn => "knn",
        }
    }

    /// Kinds that fit a linear predictor.
    pub fn is_linear_family(self) -> bool {
        self != RegressorKind::Knn
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RegressorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regressor kind {s:?}")))
    }
}

/// A regressor kind with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorSpec {
    Linear { fit_intercept: bool },
    Pls { n_components: usize },
    Lasso { lambda: f64 },
    Ridge { lambda: f64 },
    Knn { k: usize, weighting: Weighting, p: u32 },
}

impl Eq for RegressorSpec {}

impl Hash for RegressorSpec {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match *self {
            RegressorSpec::Linear { fit_intercept } => fit_intercept.hash(state),
            RegressorSpec::Pls { n_components } => n_components.hash(state),
            RegressorSpec::Lasso { lambda } | RegressorSpec::Ridge { lambda } => {
                lambda.to_bits().hash(state)
            }
            RegressorSpec::Knn { k, weighting, p } => (k, weighting, p).hash(state),
        }
    }
}

/// Admissible regularization strengths, inclusive.
pub const LAMBDA_RANGE: (f64, f64) = (0.01, 10.0);
pub const KNN_K_RANGE: (usize, usize) = (1, 13);
pub const KNN_P_RANGE: (u32, u32) = (1, 6);

/// `LAMBDA_RANGE` with slack for grid points computed by `powf`.
pub fn in_lambda_range(lambda: f64) -> bool {
    let slack = 1e-9;
    lambda.is_finite() && lambda >= LAMBDA_RANGE.0 * (1.0 - slack) && lambda <= LAMBDA_RANGE.1 * (1.0 + slack)
}

impl RegressorSpec {
    pub fn kind(&self) -> RegressorKind {
        match self {
            RegressorSpec::Linear { .. } => RegressorKind::Linear,
            RegressorSpec::Pls { .. } => RegressorKind::Pls,
            RegressorSpec::Lasso { .. } => RegressorKind::Lasso,
            RegressorSpec::Ridge { .. } => RegressorKind::Ridge,
            RegressorSpec::Knn { .. } => RegressorKind::Knn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match *self {
            RegressorSpec::Linear { .. } => Ok(()),
            RegressorSpec::Pls { n_components } if n_components < 1 => {
                bad("pls needs at least one component".into())
            }
            RegressorSpec::Lasso { lambda } | RegressorSpec::Ridge { lambda } if !in_lambda_range(lambda) => bad(
                format!("lambda must lie in [{}, {}], got {lambda}", LAMBDA_RANGE.0, LAMBDA_RANGE.1),
            ),
            RegressorSpec::Knn { k, p, .. }
                if !(KNN_K_RANGE.0..=KNN_K_RANGE.1).contains(&k) || !(KNN_P_RANGE.0..=KNN_P_RANGE.1).contains(&p) =>
            {
                bad(format!(
                    "knn needs k in [{}, {}] and p in [{}, {}], got k={k}, p={p}",
                    KNN_K_RANGE.0, KNN_K_RANGE.1, KNN_P_RANGE.0, KNN_P_RANGE.1
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Per-column centering and scaling from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation of each column; zero-variance
    /// columns get scale 1. Without centering the mean is recorded as 0.
    pub fn fit(x: &DMatrix<f64>, center: bool) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(if center { m } else { 0.0 });
            scale.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Standardization { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        z
    }
}

/// Learned parameters of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameters {
    /// `ŷ = intercept + coefficients · z` on standardized features `z`.
    Linear { coefficients: Vec<f64>, intercept: f64 },
    /// Standardized training rows and their targets.
    Neighbors { rows: Vec<Vec<f64>>, targets: Vec<f64> },
}

/// A trained regressor bound to a set of input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: RegressorSpec,
    /// Indices of the input columns the model reads, in order.
    pub selected_columns: Vec<usize>,
    /// Total input column count expected by `predict`.
    pub n_input_columns: usize,
    pub standardization: Standardization,
    pub parameters: Parameters,
}

/// Builds a matrix from row vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!("row {i} has a different length")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        let (i, j) = (pos % x.nrows().max(1), pos / x.nrows().max(1));
        return Err(Error::InvalidArgument(format!(
            "non-finite {what} value at row {i}, column {j}"
        )));
    }
    Ok(())
}

/// Fits on all columns of `x`.
pub fn fit(spec: &RegressorSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<FittedModel> {
    let all: Vec<usize> = (0..x.ncols()).collect();
    fit_columns(spec, x, y, &all)
}

/// Fits on the listed columns of `x`.
pub fn fit_columns(spec: &RegressorSpec, x: &DMatrix<f64>, y: &[f64], columns: &[usize]) -> Result<FittedModel> {
    if let Some(&c) = columns.iter().find(|&&c| c >= x.ncols()) {
        return Err(Error::InvalidArgument(format!("column {c} out of range")));
    }
    let sub = x.select_columns(columns);
    let (standardization, parameters) = fit_dense(spec, &sub, y)?;
    Ok(FittedModel {
        spec: *spec,
        selected_columns: columns.to_vec(),
        n_input_columns: x.ncols(),
        standardization,
        parameters,
    })
}

/// Fits on every column of a dense training matrix.
pub(crate) fn fit_dense(
    spec: &RegressorSpec,
    x: &DMatrix<f64>,
    y: &[f64],
) -> Result<(Standardization, Parameters)> {
    spec.validate()?;
    let (n, f) = x.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("fitting needs at least 2 rows, got {n}")));
    }
    if f < 1 {
        return Err(Error::InvalidArgument("fitting needs at least one column".into()));
    }
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("{} targets for {n} rows", y.len())));
    }
    check_finite(x, "feature")?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite target at row {i}")));
    }
    let center = !matches!(spec, RegressorSpec::Linear { fit_intercept: false });
    let st = Standardization::fit(x, center);
    let z = st.apply(x);
    let yv = DVector::from_column_slice(y);
    let params = match *spec {
        RegressorSpec::Linear { fit_intercept } => linear::ols(&z, &yv, fit_intercept),
        RegressorSpec::Ridge { lambda } => linear::ridge(&z, &yv, lambda)?,
        RegressorSpec::Lasso { lambda } => lasso::lasso(&z, &yv, lambda)?,
        RegressorSpec::Pls { n_components } => pls::pls1(&z, &yv, n_components.min(f).min(n - 1)),
        RegressorSpec::Knn { k, .. } => {
            if n < k {
                return Err(Error::InvalidArgument(format!(
                    "knn with k={k} needs at least {k} training rows, got {n}"
                )));
            }
            Parameters::Neighbors {
                rows: z.row_iter().map(|r| r.iter().copied().collect()).collect(),
                targets: y.to_vec(),
            }
        }
    };
    Ok((st, params))
}

pub(crate) fn predict_dense(
    spec: &RegressorSpec,
    st: &Standardization,
    params: &Parameters,
    x: &DMatrix<f64>,
) -> Vec<f64> {
    let z = st.apply(x);
    match (params, spec) {
        (Parameters::Linear { coefficients, intercept }, _) => {
            let b = DVector::from_column_slice(coefficients);
            (&z * b).iter().map(|v| v + intercept).collect()
        }
        (Parameters::Neighbors { rows, targets }, RegressorSpec::Knn { k, weighting, p }) => z
            .row_iter()
            .map(|q| {
                let q: Vec<f64> = q.iter().copied().collect();
                knn::predict_one(rows, targets, &q, *k, *weighting, *p)
            })
            .collect(),
        (Parameters::Neighbors { .. }, _) => unreachable!("neighbor parameters belong to knn"),
    }
}

/// Predicts targets for the rows of `x`, which must have the model's input
/// column count.
pub fn predict(model: &FittedModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.n_input_columns {
        return Err(Error::InvalidArgument(format!(
            "model expects {} columns, got {}",
            model.n_input_columns,
            x.ncols()
        )));
    }
    check_finite(x, "feature")?;
    let sub = x.select_columns(&model.selected_columns);
    Ok(predict_dense(&model.spec, &model.standardization, &model.parameters, &sub))
}

/// Coefficient of determination `1 − SSres/SStot`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::InvalidArgument(format!(
            "r2 length mismatch: {} vs {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument("r2 needs at least two samples".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::DegenerateInput("r2 undefined for constant targets".into()));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
