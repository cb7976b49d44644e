//! The batch pipeline behind the command-line tool: cohort generation,
//! fitting with the full results table, prediction and evaluation.

mod config;
mod evaluate;
mod fit;
mod predict;

pub use config::{load_atlases, load_subjects, read_weights, AtlasPaths, RunConfig, SubjectPath};
pub use evaluate::{compare, metrics, pair, residuals_csv, Metrics, Paired};
pub use fit::{
    comparisons_csv, fit_pipeline, output_dir, outputs, results_csv, results_text, select_table,
    write_fit_outputs, CellResult, Comparison, FeatureSource, FitOutput, ModelBundle, SelectionSettings,
};
pub use predict::{predict_volumes, predictions_csv, volume_id, Prediction};

use std::path::Path;

use crate::error::Result;
use crate::phantom::{atlas_id, generate_cohort, layout, subject_id, write_cohort, PhantomSpec};

/// File name of the fit configuration written next to a phantom cohort.
pub const FIT_CONFIG: &str = "fit_config.json";

/// Generates a cohort, writes it to `out`, and adds a ready-to-run
/// [`RunConfig`] with paths relative to `out`.
pub fn write_phantom_cohort(n: usize, m: usize, seed: u64, spec: &PhantomSpec, out: &Path) -> Result<RunConfig> {
    let cohort = generate_cohort(n, m, seed, spec)?;
    write_cohort(&cohort, out)?;
    let config = RunConfig {
        atlases: (0..m)
            .map(|j| AtlasPaths {
                volume: Path::new(layout::ATLAS_DIR).join(format!("{}.nii", atlas_id(j))),
                mask: Path::new(layout::ATLAS_DIR).join(format!("{}_mask.nii", atlas_id(j))),
            })
            .collect(),
        subjects: (0..n)
            .map(|i| SubjectPath {
                id: subject_id(i),
                volume: Path::new(layout::SUBJECT_DIR).join(format!("{}.nii", subject_id(i))),
            })
            .collect(),
        weights_csv: layout::WEIGHTS.into(),
        histogram: Default::default(),
        registration: Default::default(),
        cv: Default::default(),
        annealing: Default::default(),
        search_space: Default::default(),
        kinds: crate::regress::RegressorKind::ALL.to_vec(),
        output_dir: Some("fit".into()),
        seed,
    };
    config.save(&out.join(FIT_CONFIG))?;
    Ok(config)
}
