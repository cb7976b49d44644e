//! Joint feature-subset and hyperparameter search by simulated annealing.
//!
//! The walker moves through (feature bitset, regressor spec) pairs, one
//! atomic change per step, scoring each candidate by the mean r² of a
//! repeated k-fold protocol whose folds are fixed for the whole run.
//! Improvements are always accepted, degradations with probability
//! `exp(ΔE / T)`; the best configuration ever evaluated is returned.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::{
    in_lambda_range, repeated_kfold_columns, CVProtocol, RegressorKind, RegressorSpec, Weighting, KNN_K_RANGE,
    KNN_P_RANGE, LAMBDA_RANGE,
};
use crate::seeds;

/// Temperature schedule and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealingSchedule {
    pub n_iterations: usize,
    pub t0: f64,
    pub t_start: f64,
    pub early_stop_window: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            n_iterations: 8000,
            t0: 1e-7,
            t_start: 1.0,
            early_stop_window: 500,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations < 1 {
            return Err(Error::InvalidArgument("annealing needs at least one iteration".into()));
        }
        if !(self.t0 > 0.0 && self.t0 < self.t_start && self.t_start.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "annealing needs 0 < t0 < t_start, got t0={} t_start={}",
                self.t0, self.t_start
            )));
        }
        if self.early_stop_window < 1 {
            return Err(Error::InvalidArgument("early_stop_window must be positive".into()));
        }
        Ok(())
    }

    /// Per-iteration cooling factor taking `t_start` to `t0` in
    /// `n_iterations` steps.
    pub fn alpha(&self) -> f64 {
        (self.t0 / self.t_start).powf(1.0 / self.n_iterations as f64)
    }
}

/// Hyperparameter grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub lambdas: Vec<f64>,
    pub knn_k: Vec<usize>,
    pub knn_p: Vec<u32>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            // 10^-2 .. 10^1 in tenths of a decade.
            lambdas: (0..=30).map(|i| 10f64.powf(-2.0 + i as f64 / 10.0)).collect(),
            knn_k: (1..=13).collect(),
            knn_p: (1..=6).collect(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.knn_k.is_empty() || self.knn_p.is_empty() {
            return Err(Error::InvalidArgument("search grids must be non-empty".into()));
        }
        if self.lambdas.iter().any(|&l| !in_lambda_range(l)) {
            return Err(Error::InvalidArgument(format!(
                "lambda grid must lie in [{}, {}]",
                LAMBDA_RANGE.0, LAMBDA_RANGE.1
            )));
        }
        if self.knn_k.iter().any(|k| !(KNN_K_RANGE.0..=KNN_K_RANGE.1).contains(k))
            || self.knn_p.iter().any(|p| !(KNN_P_RANGE.0..=KNN_P_RANGE.1).contains(p))
        {
            return Err(Error::InvalidArgument(format!(
                "knn grids must lie in k [{}, {}] and p [{}, {}]",
                KNN_K_RANGE.0, KNN_K_RANGE.1, KNN_P_RANGE.0, KNN_P_RANGE.1
            )));
        }
        Ok(())
    }

    /// PLS component range for a subset of `f` features:
    /// `[min(2, cap), cap]` with `cap = max(1, min(⌈√f⌉, f))`.
    pub fn pls_range(f: usize) -> (usize, usize) {
        let cap = ((f as f64).sqrt().ceil() as usize).min(f).max(1);
        (2.min(cap), cap)
    }

    fn random_spec(&self, kind: RegressorKind, f: usize, rng: &mut ChaCha8Rng) -> RegressorSpec {
        let pick = |n: usize, rng: &mut ChaCha8Rng| rng.random_range(0..n);
        match kind {
            RegressorKind::Linear => RegressorSpec::Linear {
                fit_intercept: rng.random_bool(0.5),
            },
            RegressorKind::Pls => {
                let (lo, hi) = Self::pls_range(f);
                RegressorSpec::Pls {
                    n_components: rng.random_range(lo..=hi),
                }
            }
            RegressorKind::Lasso => RegressorSpec::Lasso {
                lambda: self.lambdas[pick(self.lambdas.len(), rng)],
            },
            RegressorKind::Ridge => RegressorSpec::Ridge {
                lambda: self.lambdas[pick(self.lambdas.len(), rng)],
            },
            RegressorKind::Knn => RegressorSpec::Knn {
                k: self.knn_k[pick(self.knn_k.len(), rng)],
                weighting: if rng.random_bool(0.5) {
                    Weighting::Uniform
                } else {
                    Weighting::Distance
                },
                p: self.knn_p[pick(self.knn_p.len(), rng)],
            },
        }
    }
}

/// Draws a grid value different from `current`, if the grid has one.
fn redraw<T: Copy + PartialEq>(grid: &[T], current: T, rng: &mut ChaCha8Rng) -> Option<T> {
    let others: Vec<T> = grid.iter().copied().filter(|&v| v != current).collect();
    (!others.is_empty()).then(|| others[rng.random_range(0..others.len())])
}

/// A point of the search space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub feature_bits: Vec<bool>,
    pub spec: RegressorSpec,
}

impl Configuration {
    pub fn selected(&self) -> Vec<usize> {
        self.feature_bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn n_selected(&self) -> usize {
        self.feature_bits.iter().filter(|&&b| b).count()
    }

    /// Re-establishes the PLS component bound after the subset changed.
    fn clamp(&mut self) {
        let f = self.n_selected();
        if let RegressorSpec::Pls { n_components } = &mut self.spec {
            let (lo, hi) = SearchSpace::pls_range(f);
            *n_components = (*n_components).clamp(lo, hi);
        }
    }

    /// Whether the configuration is valid within `space`.
    pub fn is_valid(&self, space: &SearchSpace) -> bool {
        if self.n_selected() == 0 {
            return false;
        }
        match self.spec {
            RegressorSpec::Linear { .. } => true,
            RegressorSpec::Pls { n_components } => {
                let (lo, hi) = SearchSpace::pls_range(self.n_selected());
                (lo..=hi).contains(&n_components)
            }
            RegressorSpec::Lasso { lambda } | RegressorSpec::Ridge { lambda } => space.lambdas.contains(&lambda),
            RegressorSpec::Knn { k, p, .. } => space.knn_k.contains(&k) && space.knn_p.contains(&p),
        }
    }
}

/// Whether the feature subset is searched or fixed to all columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    FeaturesAndParameters,
    ParametersOnly,
}

fn flip_bit(config: &Configuration, rng: &mut ChaCha8Rng) -> Option<Configuration> {
    let f = config.feature_bits.len();
    if config.n_selected() == 1 && f == 1 {
        return None;
    }
    loop {
        let j = rng.random_range(0..f);
        if config.feature_bits[j] && config.n_selected() == 1 {
            continue;
        }
        let mut next = config.clone();
        next.feature_bits[j] = !next.feature_bits[j];
        next.clamp();
        return Some(next);
    }
}

fn change_parameter(config: &Configuration, space: &SearchSpace, rng: &mut ChaCha8Rng) -> Option<Configuration> {
    let spec = match config.spec {
        RegressorSpec::Linear { fit_intercept } => RegressorSpec::Linear {
            fit_intercept: !fit_intercept,
        },
        RegressorSpec::Pls { n_components } => {
            let (lo, hi) = SearchSpace::pls_range(config.n_selected());
            let grid: Vec<usize> = (lo..=hi).collect();
            RegressorSpec::Pls {
                n_components: redraw(&grid, n_components, rng)?,
            }
        }
        RegressorSpec::Lasso { lambda } => RegressorSpec::Lasso {
            lambda: redraw(&space.lambdas, lambda, rng)?,
        },
        RegressorSpec::Ridge { lambda } => RegressorSpec::Ridge {
            lambda: redraw(&space.lambdas, lambda, rng)?,
        },
        RegressorSpec::Knn { k, weighting, p } => {
            let mut s = (k, weighting, p);
            // Pick one of the three hyperparameters; fall through to the
            // others when the chosen grid offers no alternative.
            let first = rng.random_range(0..3);
            let mut changed = false;
            for h in (0..3).map(|o| (first + o) % 3) {
                changed = match h {
                    0 => redraw(&space.knn_k, k, rng).map(|v| s.0 = v).is_some(),
                    1 => {
                        s.1 = match weighting {
                            Weighting::Uniform => Weighting::Distance,
                            Weighting::Distance => Weighting::Uniform,
                        };
                        true
                    }
                    _ => redraw(&space.knn_p, p, rng).map(|v| s.2 = v).is_some(),
                };
                if changed {
                    break;
                }
            }
            debug_assert!(changed);
            RegressorSpec::Knn {
                k: s.0,
                weighting: s.1,
                p: s.2,
            }
        }
    };
    Some(Configuration {
        feature_bits: config.feature_bits.clone(),
        spec,
    })
}

/// One atomic change: a feature bit flip or a hyperparameter redraw, each
/// with probability ½ (only the latter in `ParametersOnly` mode). When the
/// chosen branch has no legal move the other branch is used.
pub fn propose_move(
    config: &Configuration,
    space: &SearchSpace,
    mode: SearchMode,
    rng: &mut ChaCha8Rng,
) -> Configuration {
    let flip_first = mode == SearchMode::FeaturesAndParameters && rng.random_bool(0.5);
    let moved = if flip_first {
        flip_bit(config, rng).or_else(|| change_parameter(config, space, rng))
    } else {
        change_parameter(config, space, rng).or_else(|| {
            if mode == SearchMode::FeaturesAndParameters {
                flip_bit(config, rng)
            } else {
                None
            }
        })
    };
    moved.unwrap_or_else(|| config.clone())
}

/// `min(1, exp((e_new − e_old)/T))` for a maximized score.
pub fn acceptance_probability(e_old: f64, e_new: f64, temperature: f64) -> f64 {
    if e_new.is_nan() || e_new == f64::NEG_INFINITY {
        return 0.0;
    }
    if e_new >= e_old {
        return 1.0;
    }
    ((e_new - e_old) / temperature).exp().min(1.0)
}

/// Scores configurations; higher is better.
pub trait Objective {
    fn score(&self, config: &Configuration) -> Result<f64>;
}

/// Mean r² of repeated k-fold cross-validation on the selected columns.
pub struct CvObjective<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
    pub protocol: CVProtocol,
}

impl Objective for CvObjective<'_> {
    fn score(&self, config: &Configuration) -> Result<f64> {
        let r = repeated_kfold_columns(&config.spec, self.x, self.y, &config.selected(), &self.protocol)?;
        if !r.mean_r2.is_finite() {
            return Err(Error::NumericalFailure("non-finite cross-validated r2".into()));
        }
        Ok(r.mean_r2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Exhausted,
    EarlyStop,
}

/// One evaluated candidate. Iteration 1 is the random initial configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Candidate score; `None` when scoring failed.
    pub score: Option<f64>,
    pub accepted: bool,
    pub temperature: f64,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub kind: RegressorKind,
    pub mode: SearchMode,
    pub best_config: Configuration,
    pub best_score: f64,
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
    /// Distinct configurations scored (cache misses).
    pub evaluations: usize,
    pub failed_evaluations: usize,
}

impl SelectionResult {
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |t| t.iteration)
    }

    /// Trace as CSV: `iteration,score,accepted,temperature,best_score`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,score,accepted,temperature,best_score\n");
        for t in &self.trace {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            s.push_str(&format!(
                "{},{},{},{:e},{}\n",
                t.iteration,
                opt(t.score),
                t.accepted,
                t.temperature,
                opt(t.best_score)
            ));
        }
        s
    }
}

fn random_configuration(
    n_features: usize,
    kind: RegressorKind,
    space: &SearchSpace,
    mode: SearchMode,
    rng: &mut ChaCha8Rng,
) -> Configuration {
    let feature_bits = match mode {
        SearchMode::ParametersOnly => vec![true; n_features],
        SearchMode::FeaturesAndParameters => loop {
            let bits: Vec<bool> = (0..n_features).map(|_| rng.random_bool(0.5)).collect();
            if bits.iter().any(|&b| b) {
                break bits;
            }
        },
    };
    let f = feature_bits.iter().filter(|&&b| b).count();
    let spec = space.random_spec(kind, f, rng);
    Configuration { feature_bits, spec }
}

/// Simulated annealing against an arbitrary objective.
pub fn anneal_objective<O: Objective + ?Sized>(
    objective: &O,
    n_features: usize,
    kind: RegressorKind,
    schedule: &AnnealingSchedule,
    space: &SearchSpace,
    mode: SearchMode,
    rng_seed: u64,
) -> Result<SelectionResult> {
    schedule.validate()?;
    space.validate()?;
    if n_features == 0 {
        return Err(Error::InvalidArgument("no features to select from".into()));
    }
    let mut rng = seeds::rng(rng_seed);
    let mut cache: HashMap<Configuration, Option<f64>> = HashMap::new();
    let mut first_error: Option<Error> = None;
    let mut failed = 0usize;
    let mut evaluate = |c: &Configuration| -> f64 {
        if let Some(s) = cache.get(c) {
            return s.unwrap_or(f64::NEG_INFINITY);
        }
        let s = match objective.score(c) {
            Ok(s) if s.is_finite() => Some(s),
            Ok(_) => None,
            Err(e) => {
                first_error.get_or_insert(e);
                None
            }
        };
        if s.is_none() {
            failed += 1;
        }
        cache.insert(c.clone(), s);
        s.unwrap_or(f64::NEG_INFINITY)
    };
    let finite = |s: f64| s.is_finite().then_some(s);

    // The temperature is lowered at the start of every iteration, the first
    // included, so an exhausted run ends exactly at t0.
    let alpha = schedule.alpha();
    let mut temperature = schedule.t_start * alpha;
    let mut current = random_configuration(n_features, kind, space, mode, &mut rng);
    let mut current_score = evaluate(&current);
    let mut best = current.clone();
    let mut best_score = current_score;
    let mut last_best = 1usize;
    let mut trace = vec![TraceEntry {
        iteration: 1,
        score: finite(current_score),
        accepted: true,
        temperature,
        best_score: finite(best_score),
    }];
    let mut stop_reason = StopReason::Exhausted;
    for it in 2..=schedule.n_iterations {
        if it - 1 - last_best >= schedule.early_stop_window {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        temperature *= alpha;
        let candidate = propose_move(&current, space, mode, &mut rng);
        let score = evaluate(&candidate);
        let u: f64 = rng.random();
        let accepted = score.is_finite() && u < acceptance_probability(current_score, score, temperature);
        if score > best_score {
            best_score = score;
            best = candidate.clone();
            last_best = it;
        }
        if accepted {
            current = candidate;
            current_score = score;
        }
        trace.push(TraceEntry {
            iteration: it,
            score: finite(score),
            accepted,
            temperature,
            best_score: finite(best_score),
        });
    }
    if !best_score.is_finite() {
        let cause = first_error.map_or_else(|| "non-finite scores".to_string(), |e| e.to_string());
        return Err(Error::NumericalFailure(format!(
            "every {kind} candidate failed to score: {cause}"
        )));
    }
    Ok(SelectionResult {
        kind,
        mode,
        best_config: best,
        best_score,
        trace,
        stop_reason,
        evaluations: cache.len(),
        failed_evaluations: failed,
    })
}

/// Annealing with the cross-validated r² objective.
#[allow(clippy::too_many_arguments)]
pub fn anneal(
    x: &DMatrix<f64>,
    y: &[f64],
    kind: RegressorKind,
    schedule: &AnnealingSchedule,
    protocol: &CVProtocol,
    space: &SearchSpace,
    mode: SearchMode,
    rng_seed: u64,
) -> Result<SelectionResult> {
    protocol.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!("{} targets for {} rows", y.len(), x.nrows())));
    }
    let objective = CvObjective {
        x,
        y,
        protocol: *protocol,
    };
    anneal_objective(&objective, x.ncols(), kind, schedule, space, mode, rng_seed)
}

/// Result of one kind in [`select_over_kinds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindOutcome {
    Selected(SelectionResult),
    Failed { reason: String },
}

impl KindOutcome {
    pub fn result(&self) -> Option<&SelectionResult> {
        match self {
            KindOutcome::Selected(r) => Some(r),
            KindOutcome::Failed { .. } => None,
        }
    }
}

/// Seed used for `kind` given the master annealing seed.
pub fn kind_seed(seed: u64, kind: RegressorKind) -> u64 {
    seeds::derive(seed, &[seeds::stage::ANNEAL, kind as u64])
}

/// Independent annealing runs, one per kind, run in parallel. A kind that
/// fails is reported as such without affecting the others.
pub fn select_over_kinds_with<F>(kinds: &[RegressorKind], seed: u64, run: F) -> BTreeMap<RegressorKind, KindOutcome>
where
    F: Fn(RegressorKind, u64) -> Result<SelectionResult> + Sync,
{
    kinds
        .par_iter()
        .map(|&kind| {
            let outcome = match run(kind, kind_seed(seed, kind)) {
                Ok(r) => KindOutcome::Selected(r),
                Err(e) => KindOutcome::Failed { reason: e.to_string() },
            };
            (kind, outcome)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn select_over_kinds(
    x: &DMatrix<f64>,
    y: &[f64],
    kinds: &[RegressorKind],
    schedule: &AnnealingSchedule,
    protocol: &CVProtocol,
    space: &SearchSpace,
    mode: SearchMode,
    seed: u64,
) -> BTreeMap<RegressorKind, KindOutcome> {
    select_over_kinds_with(kinds, seed, |kind, s| anneal(x, y, kind, schedule, protocol, space, mode, s))
}
