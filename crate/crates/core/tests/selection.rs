//! Annealing search: move statistics, schedule, determinism and recovery
//! of planted optima.

mod common;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use atlasmass::error::{Error, Result};
use atlasmass::regress::{CVProtocol, RegressorKind, RegressorSpec};
use atlasmass::selection::{
    anneal, anneal_objective, propose_move, select_over_kinds_with, AnnealingSchedule, Configuration, KindOutcome,
    Objective, SearchMode, SearchSpace, StopReason,
};

/// Negative Hamming distance to a hidden subset.
struct Hamming(Vec<bool>);

impl Objective for Hamming {
    fn score(&self, c: &Configuration) -> Result<f64> {
        Ok(-(c.feature_bits.iter().zip(&self.0).filter(|(a, b)| a != b).count() as f64))
    }
}

/// Deterministic pseudo-random score per configuration.
struct Rugged;

impl Objective for Rugged {
    fn score(&self, c: &Configuration) -> Result<f64> {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        c.hash(&mut h);
        Ok((h.finish() % 10_000) as f64 / 10_000.0)
    }
}

fn schedule(n: usize) -> AnnealingSchedule {
    AnnealingSchedule { n_iterations: n, early_stop_window: n, ..Default::default() }
}

#[test]
fn half_of_the_moves_flip_one_bit() {
    let space = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let c = Configuration { feature_bits: vec![true; 20], spec: RegressorSpec::Ridge { lambda: 1.0 } };
    let trials = 20_000;
    let mut flips = 0usize;
    let mut per_bit = vec![0usize; 20];
    for _ in 0..trials {
        let next = propose_move(&c, &space, SearchMode::FeaturesAndParameters, &mut rng);
        let changed: Vec<usize> = (0..20).filter(|&j| next.feature_bits[j] != c.feature_bits[j]).collect();
        match changed.len() {
            0 => assert_ne!(next.spec, c.spec),
            1 => {
                assert_eq!(next.spec, c.spec);
                flips += 1;
                per_bit[changed[0]] += 1;
            }
            _ => panic!("two bits changed in one move"),
        }
    }
    // Binomial(20000, 1/2): sd ≈ 70.7; allow 5 sd.
    assert!((flips as f64 - 10_000.0).abs() < 5.0 * 70.8, "{flips}");
    // Each bit: Binomial(flips, 1/20).
    let expect = flips as f64 / 20.0;
    let sd = (flips as f64 * 0.05 * 0.95).sqrt();
    for (j, &count) in per_bit.iter().enumerate() {
        assert!((count as f64 - expect).abs() < 5.0 * sd, "bit {j}: {count}");
    }
}

#[test]
fn parameters_only_mode_keeps_every_feature() {
    let r = anneal_objective(
        &Rugged,
        12,
        RegressorKind::Lasso,
        &schedule(300),
        &SearchSpace::default(),
        SearchMode::ParametersOnly,
        4,
    )
    .unwrap();
    assert!(r.best_config.feature_bits.iter().all(|&b| b));
}

#[test]
fn cold_runs_never_accept_a_worse_candidate() {
    let s = AnnealingSchedule { n_iterations: 500, t_start: 1e-12, t0: 1e-14, early_stop_window: 500 };
    let r = anneal_objective(&Rugged, 10, RegressorKind::Ridge, &s, &SearchSpace::default(), SearchMode::FeaturesAndParameters, 6)
        .unwrap();
    let mut current = r.trace[0].score.unwrap();
    for t in &r.trace[1..] {
        if t.accepted {
            assert!(t.score.unwrap() >= current);
            current = t.score.unwrap();
        }
    }
}

#[test]
fn exhausted_run_ends_at_t0_and_reports_the_best_candidate() {
    let s = schedule(400);
    let r = anneal_objective(&Rugged, 8, RegressorKind::Knn, &s, &SearchSpace::default(), SearchMode::FeaturesAndParameters, 7)
        .unwrap();
    assert_eq!(r.stop_reason, StopReason::Exhausted);
    assert_eq!(r.trace.len(), 400);
    assert_eq!(r.iterations(), 400);
    let last = r.trace.last().unwrap().temperature;
    assert!((last / s.t0 - 1.0).abs() < 1e-9, "{last}");
    let max = r.trace.iter().filter_map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.best_score, max);
    assert_eq!(Rugged.score(&r.best_config).unwrap(), r.best_score);
    assert!(r.best_config.is_valid(&SearchSpace::default()));
}

#[test]
fn early_stop_fires_after_the_window_without_improvement() {
    let s = AnnealingSchedule { n_iterations: 5000, early_stop_window: 50, ..Default::default() };
    let r = anneal_objective(&Rugged, 6, RegressorKind::Ridge, &s, &SearchSpace::default(), SearchMode::FeaturesAndParameters, 8)
        .unwrap();
    assert_eq!(r.stop_reason, StopReason::EarlyStop);
    let improved = r
        .trace
        .windows(2)
        .filter(|w| w[1].best_score > w[0].best_score)
        .map(|w| w[1].iteration)
        .last()
        .unwrap_or(1);
    assert_eq!(r.iterations(), improved + 50);
}

#[test]
fn same_seed_same_search() {
    let run = |seed| {
        anneal_objective(&Rugged, 15, RegressorKind::Pls, &schedule(300), &SearchSpace::default(), SearchMode::FeaturesAndParameters, seed)
            .unwrap()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).trace, run(4).trace);
}

#[test]
fn recovers_a_hidden_subset() {
    let target: Vec<bool> = (0..30).map(|j| j % 4 == 1).collect();
    let r = anneal_objective(
        &Hamming(target.clone()),
        30,
        RegressorKind::Linear,
        &schedule(3000),
        &SearchSpace::default(),
        SearchMode::FeaturesAndParameters,
        9,
    )
    .unwrap();
    assert_eq!(r.best_config.feature_bits, target);
    assert_eq!(r.best_score, 0.0);
}

#[test]
fn a_failing_kind_does_not_affect_the_others() {
    let kinds = [RegressorKind::Linear, RegressorKind::Ridge, RegressorKind::Knn];
    let out = select_over_kinds_with(&kinds, 11, |kind, seed| {
        if kind == RegressorKind::Ridge {
            return Err(Error::NumericalFailure("boom".into()));
        }
        anneal_objective(&Rugged, 5, kind, &schedule(50), &SearchSpace::default(), SearchMode::FeaturesAndParameters, seed)
    });
    assert_eq!(out.len(), 3);
    assert!(matches!(&out[&RegressorKind::Ridge], KindOutcome::Failed { reason } if reason.contains("boom")));
    assert!(out[&RegressorKind::Linear].result().is_some());
    assert!(out[&RegressorKind::Knn].result().is_some());
    let seeds: HashSet<u64> = kinds.iter().map(|&k| atlasmass::selection::kind_seed(11, k)).collect();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn every_failing_candidate_is_a_numerical_failure() {
    struct Broken;
    impl Objective for Broken {
        fn score(&self, _: &Configuration) -> Result<f64> {
            Ok(f64::NAN)
        }
    }
    let err = anneal_objective(&Broken, 4, RegressorKind::Lasso, &schedule(20), &SearchSpace::default(), SearchMode::FeaturesAndParameters, 1)
        .unwrap_err();
    assert!(matches!(err, Error::NumericalFailure(_)));
}

#[test]
fn cross_validated_search_finds_planted_features() {
    let (x, y, informative) = common::planted_problem(31, 60, 24, 3, 0.5);
    let protocol = CVProtocol { folds: 5, repeats: 4, seed: 2 };
    let r = anneal(
        &x,
        &y,
        RegressorKind::Linear,
        &schedule(600),
        &protocol,
        &SearchSpace::default(),
        SearchMode::FeaturesAndParameters,
        5,
    )
    .unwrap();
    let selected = r.best_config.selected();
    for j in &informative {
        assert!(selected.contains(j), "missing {j} in {selected:?}");
    }
    assert!(r.best_score > 0.9, "{}", r.best_score);
}

#[test]
fn invalid_schedules_and_grids_are_rejected() {
    let bad_t = AnnealingSchedule { t0: 2.0, ..Default::default() };
    let run = |s: &AnnealingSchedule, space: &SearchSpace| {
        anneal_objective(&Rugged, 4, RegressorKind::Ridge, s, space, SearchMode::FeaturesAndParameters, 1)
    };
    assert!(run(&bad_t, &SearchSpace::default()).is_err());
    let wide = SearchSpace { lambdas: vec![0.001, 1.0], ..Default::default() };
    assert!(run(&schedule(10), &wide).is_err());
    let big_k = SearchSpace { knn_k: vec![3, 20], ..Default::default() };
    assert!(run(&schedule(10), &big_k).is_err());
}
