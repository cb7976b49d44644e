//! Cross-validated r² of the five regressor families on a sparse planted
//! problem, at fixed hyperparameters and on all columns.
//!
//! cargo run --example regressors -- [seed]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use atlasmass::regress::{repeated_kfold, CVProtocol, RegressorSpec, Weighting};

fn main() -> atlasmass::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, f) = (60, 30);
    let x = DMatrix::from_fn(n, f, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Three informative columns, the rest noise.
    let y: Vec<f64> = (0..n)
        .map(|i| 50.0 + 3.0 * x[(i, 0)] - 2.0 * x[(i, 7)] + 1.5 * x[(i, 19)] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let protocol = CVProtocol { seed, ..Default::default() };
    let specs = [
        RegressorSpec::Linear { fit_intercept: true },
        RegressorSpec::Pls { n_components: 3 },
        RegressorSpec::Lasso { lambda: 0.1 },
        RegressorSpec::Ridge { lambda: 1.0 },
        RegressorSpec::Knn { k: 5, weighting: Weighting::Distance, p: 2 },
    ];
    println!("{n} rows, {f} columns, {}x{} folds", protocol.repeats, protocol.folds);
    for spec in specs {
        let cv = repeated_kfold(&spec, &x, &y, &protocol)?;
        println!("{:<50} r2 {:>7.4} ± {:.4}  rmse {:.3}", format!("{spec:?}"), cv.mean_r2, cv.std_r2, cv.rmse());
    }
    Ok(())
}
