//! Whole pipeline on a small cohort: fit with the results table, then
//! predict held-out phantoms with the best model and score them.
//!
//! cargo run --example end_to_end -- [seed]

use atlasmass::phantom::{generate_cohort, PhantomSpec};
use atlasmass::pipeline::{fit_pipeline, predict_volumes, results_text, write_fit_outputs, write_phantom_cohort};
use atlasmass::regress::{r2, CVProtocol, RegressorKind};
use atlasmass::selection::AnnealingSchedule;
use atlasmass::volume::save_nifti;

fn main() -> atlasmass::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let dir = std::env::temp_dir().join(format!("atlasmass_e2e_{seed}"));
    let spec = PhantomSpec::small();

    let mut config = write_phantom_cohort(24, 2, seed, &spec, &dir.join("train"))?;
    config.resolve_paths(&dir.join("train"));
    config.kinds = vec![RegressorKind::Linear, RegressorKind::Ridge, RegressorKind::Lasso];
    config.cv = CVProtocol { folds: 5, repeats: 5, ..config.cv };
    config.annealing = AnnealingSchedule { n_iterations: 600, early_stop_window: 300, ..Default::default() };
    let out = fit_pipeline(&config)?;
    let fit_dir = dir.join("fit");
    write_fit_outputs(&out, &config, &fit_dir)?;
    print!("{}", results_text(&out.cells, config.atlases.len(), &config.kinds));

    let Some(best) = out.best.map(|i| &out.bundles[i]) else {
        println!("no model could be fitted");
        return Ok(());
    };
    println!("best: {} on {} (cv r2 {:.4})", best.kind, best.source.label(), best.cv_mean_r2);

    // Fresh subjects from another seed serve as the test split.
    let test = generate_cohort(8, 1, seed + 1, &spec)?;
    let test_dir = dir.join("test");
    std::fs::create_dir_all(&test_dir).map_err(|e| atlasmass::Error::Io { path: test_dir.clone(), source: e })?;
    let mut paths = Vec::new();
    for (i, v) in test.subjects.iter().enumerate() {
        let p = test_dir.join(format!("test_{i:02}.nii"));
        save_nifti(v, &p)?;
        paths.push(p);
    }
    let preds = predict_volumes(best, &paths)?;
    let truth = test.dissected_weights();
    let yhat: Vec<f64> = preds.iter().map(|p| p.predicted_weight_g).collect();
    let rmse = (truth.iter().zip(&yhat).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / truth.len() as f64).sqrt();
    for (p, t) in preds.iter().zip(&truth) {
        println!("  {}: predicted {:.1} g, dissected {:.1} g", p.id, p.predicted_weight_g, t);
    }
    println!("test r2 {:.4}, rmse {rmse:.2} g; outputs in {}", r2(&truth, &yhat)?, fit_dir.display());
    Ok(())
}
