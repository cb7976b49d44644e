use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{load_atlases, load_subjects, read_weights, AtlasPaths, RunConfig};
use crate::error::{Error, Result, ResultExt};
use crate::features::{assemble_training_set_detailed, FeatureMatrix, HistogramSpec};
use crate::registration::{AtlasSegmentation, RegistrationConfig, TransformRecord};
use crate::regress::{
    fit_columns, matrix_from_rows, repeated_kfold_columns, CVProtocol, CVResult, FittedModel, RegressorKind,
};
use crate::selection::{
    select_over_kinds, AnnealingSchedule, KindOutcome, SearchMode, SearchSpace, SelectionResult,
};
use crate::seeds;
use crate::stats::{compare_pipelines, WilcoxonMethod, WilcoxonOutcome};

/// Which region blocks a table row draws its features from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Block of one atlas (0-based).
    Atlas(usize),
    Mean,
    MultiAtlas,
}

impl FeatureSource {
    /// Table rows for `m` atlases: `atlas1..atlasM`, `mean`, `multi-atlas`.
    pub fn rows(m: usize) -> Vec<FeatureSource> {
        (0..m)
            .map(FeatureSource::Atlas)
            .chain([FeatureSource::Mean, FeatureSource::MultiAtlas])
            .collect()
    }

    pub fn label(&self) -> String {
        match self {
            FeatureSource::Atlas(j) => format!("atlas{}", j + 1),
            FeatureSource::Mean => "mean".into(),
            FeatureSource::MultiAtlas => "multi-atlas".into(),
        }
    }

    pub fn columns(&self, m: usize, spec: &HistogramSpec) -> Vec<usize> {
        match *self {
            FeatureSource::Atlas(j) => FeatureMatrix::block_columns(j, spec),
            FeatureSource::Mean => FeatureMatrix::block_columns(m, spec),
            FeatureSource::MultiAtlas => (0..(m + 1) * spec.block_len()).collect(),
        }
    }

    fn index(&self, m: usize) -> u64 {
        match *self {
            FeatureSource::Atlas(j) => j as u64,
            FeatureSource::Mean => m as u64,
            FeatureSource::MultiAtlas => m as u64 + 1,
        }
    }
}

fn mode_label(mode: SearchMode) -> &'static str {
    match mode {
        SearchMode::FeaturesAndParameters => "fs",
        SearchMode::ParametersOnly => "nofs",
    }
}

/// Search settings shared by every table cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSettings {
    pub kinds: Vec<RegressorKind>,
    pub schedule: AnnealingSchedule,
    pub protocol: CVProtocol,
    pub space: SearchSpace,
    pub seed: u64,
}

/// One (source, mode, kind) cell of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub source: FeatureSource,
    pub mode: SearchMode,
    pub kind: RegressorKind,
    pub outcome: KindOutcome,
    /// Cross-validation of the best configuration (input columns of the row).
    pub cv: Option<CVResult>,
}

impl CellResult {
    pub fn mean_r2(&self) -> Option<f64> {
        self.cv.as_ref().map(|c| c.mean_r2)
    }

    /// Best configuration's columns as indices into the full matrix.
    pub fn selected_columns(&self, m: usize, spec: &HistogramSpec) -> Option<Vec<usize>> {
        let r = self.outcome.result()?;
        let cols = self.source.columns(m, spec);
        Some(r.best_config.selected().into_iter().map(|i| cols[i]).collect())
    }
}

/// Runs the annealing search for the given rows and modes on a finished
/// feature matrix. Cells come back ordered by source, mode, then kind.
pub fn select_table(
    features: &FeatureMatrix,
    m_atlases: usize,
    spec: &HistogramSpec,
    sources: &[FeatureSource],
    modes: &[SearchMode],
    settings: &SelectionSettings,
) -> Result<Vec<CellResult>> {
    let expected = (m_atlases + 1) * spec.block_len();
    if features.n_cols() != expected {
        return Err(Error::InvalidArgument(format!(
            "feature matrix has {} columns, expected {expected}",
            features.n_cols()
        )));
    }
    let y = features.targets()?.to_vec();
    let x_full = matrix_from_rows(&features.rows)?;
    let jobs: Vec<(FeatureSource, SearchMode)> = sources
        .iter()
        .flat_map(|&s| modes.iter().map(move |&m| (s, m)))
        .collect();
    let cells: Vec<Vec<CellResult>> = jobs
        .par_iter()
        .map(|&(source, mode)| {
            let cols = source.columns(m_atlases, spec);
            let x = x_full.select_columns(&cols);
            let seed = seeds::derive(settings.seed, &[source.index(m_atlases), mode as u64]);
            let outcomes = select_over_kinds(
                &x,
                &y,
                &settings.kinds,
                &settings.schedule,
                &settings.protocol,
                &settings.space,
                mode,
                seed,
            );
            info!("selection finished for {} ({})", source.label(), mode_label(mode));
            outcomes
                .into_iter()
                .map(|(kind, outcome)| {
                    let cv = outcome.result().and_then(|r| {
                        repeated_kfold_columns(
                            &r.best_config.spec,
                            &x,
                            &y,
                            &r.best_config.selected(),
                            &settings.protocol,
                        )
                        .ok()
                    });
                    CellResult {
                        source,
                        mode,
                        kind,
                        outcome,
                        cv,
                    }
                })
                .collect()
        })
        .collect();
    Ok(cells.into_iter().flatten().collect())
}

/// A fitted model together with everything needed to reproduce its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub kind: RegressorKind,
    pub source: FeatureSource,
    pub feature_names: Vec<String>,
    pub selected_feature_names: Vec<String>,
    pub model: FittedModel,
    pub atlases: Vec<AtlasPaths>,
    pub histogram: HistogramSpec,
    pub registration: RegistrationConfig,
    pub cv_mean_r2: f64,
    pub cv_std_r2: f64,
}

impl ModelBundle {
    pub fn load(path: &Path) -> Result<ModelBundle> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).with_context(|| format!("model bundle {}", path.display()))
    }
}

/// Everything produced by a fit, before it is written out.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub features: FeatureMatrix,
    pub subject_ids: Vec<String>,
    pub segmentations: Vec<Vec<AtlasSegmentation>>,
    pub cells: Vec<CellResult>,
    pub bundles: Vec<ModelBundle>,
    /// Index into `bundles` of the highest scoring kind.
    pub best: Option<usize>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pipeline_a: String,
    pub pipeline_b: String,
    pub outcome: WilcoxonOutcome,
}

fn cell_label(c: &CellResult) -> String {
    format!("{}/{}/{}", c.source.label(), mode_label(c.mode), c.kind)
}

/// Multi-atlas with selection against every other row of the same kind.
fn compare_cells(cells: &[CellResult]) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for a in cells
        .iter()
        .filter(|c| c.source == FeatureSource::MultiAtlas && c.mode == SearchMode::FeaturesAndParameters)
    {
        let Some(cva) = &a.cv else { continue };
        for b in cells.iter().filter(|b| b.kind == a.kind && !std::ptr::eq(*b, a)) {
            let Some(cvb) = &b.cv else { continue };
            out.push(Comparison {
                pipeline_a: cell_label(a),
                pipeline_b: cell_label(b),
                outcome: compare_pipelines(cva, cvb)?,
            });
        }
    }
    Ok(out)
}

/// Segmentation, feature extraction, the full results table and the
/// per-kind models, without touching the output directory.
pub fn fit_pipeline(config: &RunConfig) -> Result<FitOutput> {
    config.validate()?;
    let atlases = load_atlases(&config.atlases).context("loading atlases")?;
    let subjects = load_subjects(&config.subjects).context("loading subjects")?;
    let weights = read_weights(&config.weights_csv)?;
    let y: Vec<f64> = config
        .subjects
        .iter()
        .map(|s| {
            weights
                .get(&s.id)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no weight for subject {}", s.id)))
        })
        .collect::<Result<_>>()?;
    let reg = config.registration_config();
    info!("segmenting {} subjects with {} atlases", subjects.len(), atlases.len());
    let (features, segmentations) =
        assemble_training_set_detailed(&subjects, &atlases, Some(&y), &config.histogram, &reg)
            .context("segmentation")?;
    let m = atlases.len();
    let settings = SelectionSettings {
        kinds: config.kinds.clone(),
        schedule: config.annealing,
        protocol: config.cv_protocol(),
        space: config.search_space.clone(),
        seed: config.anneal_seed(),
    };
    let cells = select_table(
        &features,
        m,
        &config.histogram,
        &FeatureSource::rows(m),
        &[SearchMode::ParametersOnly, SearchMode::FeaturesAndParameters],
        &settings,
    )
    .context("selection")?;
    let comparisons = compare_cells(&cells).context("comparisons")?;

    let x = matrix_from_rows(&features.rows)?;
    let atlas_paths = config
        .atlases
        .iter()
        .map(|a| {
            let abs = |p: &Path| std::fs::canonicalize(p).map_err(|e| Error::io(p, e));
            Ok(AtlasPaths {
                volume: abs(&a.volume)?,
                mask: abs(&a.mask)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bundles = Vec::new();
    for c in cells
        .iter()
        .filter(|c| c.source == FeatureSource::MultiAtlas && c.mode == SearchMode::FeaturesAndParameters)
    {
        let (Some(r), Some(cv)) = (c.outcome.result(), &c.cv) else { continue };
        let cols = c.selected_columns(m, &config.histogram).expect("selected");
        let model = fit_columns(&r.best_config.spec, &x, &y, &cols).with_context(|| format!("final {} model", c.kind))?;
        bundles.push(ModelBundle {
            kind: c.kind,
            source: c.source,
            feature_names: features.column_names.clone(),
            selected_feature_names: cols.iter().map(|&i| features.column_names[i].clone()).collect(),
            model,
            atlases: atlas_paths.clone(),
            histogram: config.histogram,
            registration: reg.clone(),
            cv_mean_r2: cv.mean_r2,
            cv_std_r2: cv.std_r2,
        });
    }
    let best = bundles
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cv_mean_r2.total_cmp(&b.1.cv_mean_r2).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    Ok(FitOutput {
        features,
        subject_ids: config.subjects.iter().map(|s| s.id.clone()).collect(),
        segmentations,
        cells,
        bundles,
        best,
        comparisons,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn method_name(m: WilcoxonMethod) -> &'static str {
    match m {
        WilcoxonMethod::Exact => "exact",
        WilcoxonMethod::NormalApprox => "normal_approx",
    }
}

/// Comparison table as CSV: `pipeline_a,pipeline_b,W,n_effective,p,method`.
pub fn comparisons_csv(rows: &[Comparison]) -> String {
    let mut s = String::from("pipeline_a,pipeline_b,W,n_effective,p,method\n");
    for c in rows {
        let o = &c.outcome;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.pipeline_a,
            c.pipeline_b,
            o.w_statistic,
            o.n_effective,
            o.p_two_sided,
            method_name(o.method)
        );
    }
    s
}

/// Results table as CSV, one line per cell.
pub fn results_csv(cells: &[CellResult]) -> String {
    let mut s = String::from("source,feature_selection,kind,mean_r2,std_r2,rmse_g,n_selected,status\n");
    for c in cells {
        let fs = c.mode == SearchMode::FeaturesAndParameters;
        match (&c.outcome, &c.cv) {
            (KindOutcome::Selected(r), Some(cv)) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},ok",
                    c.source.label(),
                    fs,
                    c.kind,
                    cv.mean_r2,
                    cv.std_r2,
                    cv.rmse(),
                    r.best_config.n_selected()
                );
            }
            _ => {
                let _ = writeln!(s, "{},{},{},,,,,failed", c.source.label(), fs, c.kind);
            }
        }
    }
    s
}

/// Plain-text table: rows are (source, selection), columns are kinds.
pub fn results_text(cells: &[CellResult], m: usize, kinds: &[RegressorKind]) -> String {
    let width = 19;
    let mut s = format!("{:<12} {:<4}", "source", "FS");
    for k in kinds {
        let _ = write!(s, " {:>width$}", k.name());
    }
    s.push('\n');
    for source in FeatureSource::rows(m) {
        for mode in [SearchMode::ParametersOnly, SearchMode::FeaturesAndParameters] {
            let fs = if mode == SearchMode::FeaturesAndParameters { "yes" } else { "no" };
            let _ = write!(s, "{:<12} {:<4}", source.label(), fs);
            for k in kinds {
                let cell = cells
                    .iter()
                    .find(|c| c.source == source && c.mode == mode && c.kind == *k)
                    .and_then(|c| c.cv.as_ref())
                    .map_or_else(|| "failed".to_string(), |cv| format!("{:.4} ± {:.4}", cv.mean_r2, cv.std_r2));
                let _ = write!(s, " {cell:>width$}");
            }
            s.push('\n');
        }
    }
    s
}

fn qc_csv(ids: &[String], segs: &[Vec<AtlasSegmentation>]) -> String {
    let mut s = String::from("subject,atlas,mask_voxels,mi_initial,mi_final\n");
    for (id, per) in ids.iter().zip(segs) {
        for (j, seg) in per.iter().enumerate() {
            let _ = writeln!(
                s,
                "{id},{},{},{},{}",
                j + 1,
                seg.mask.count(),
                seg.report.mi_initial,
                seg.report.mi_final
            );
        }
    }
    s
}

/// Paths written by [`write_fit_outputs`], relative to the output directory.
pub mod outputs {
    pub const FEATURES: &str = "features.csv";
    pub const QC: &str = "segmentation_qc.csv";
    pub const TRANSFORMS: &str = "transforms";
    pub const SELECTION: &str = "selection";
    pub const RESULTS_CSV: &str = "results_table.csv";
    pub const RESULTS_TXT: &str = "results_table.txt";
    pub const COMPARISONS: &str = "comparisons.csv";
    pub const MODELS: &str = "models";
    pub const MODEL: &str = "model.json";
}

pub fn write_fit_outputs(out: &FitOutput, config: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.features.save_csv(&dir.join(outputs::FEATURES))?;
    write(&dir.join(outputs::QC), &qc_csv(&out.subject_ids, &out.segmentations))?;
    let reg = config.registration_config();
    for (id, per) in out.subject_ids.iter().zip(&out.segmentations) {
        let records: Vec<TransformRecord> = per
            .iter()
            .enumerate()
            .map(|(j, s)| TransformRecord {
                transform: s.transform.clone(),
                report: s.report.clone(),
                config: RegistrationConfig {
                    seed: crate::registration::atlas_seed(&reg, j),
                    ..reg.clone()
                },
            })
            .collect();
        write(
            &dir.join(outputs::TRANSFORMS).join(format!("{id}.json")),
            &(serde_json::to_string(&records)? + "\n"),
        )?;
    }
    for c in &out.cells {
        let stem = format!("{}_{}_{}", c.source.label(), mode_label(c.mode), c.kind);
        let sel = dir.join(outputs::SELECTION);
        match &c.outcome {
            KindOutcome::Selected(r) => {
                write(&sel.join(format!("{stem}.json")), &json(&SelectionSummary::new(r, c, &out.features, config))?)?;
                write(&sel.join(format!("{stem}_trace.csv")), &r.trace_csv())?;
            }
            KindOutcome::Failed { reason } => {
                write(&sel.join(format!("{stem}.json")), &json(&serde_json::json!({ "failed": reason }))?)?;
            }
        }
    }
    let m = config.atlases.len();
    write(&dir.join(outputs::RESULTS_CSV), &results_csv(&out.cells))?;
    write(&dir.join(outputs::RESULTS_TXT), &results_text(&out.cells, m, &config.kinds))?;
    write(&dir.join(outputs::COMPARISONS), &comparisons_csv(&out.comparisons))?;
    for b in &out.bundles {
        write(&dir.join(outputs::MODELS).join(format!("{}.json", b.kind)), &json(b)?)?;
    }
    if let Some(i) = out.best {
        write(&dir.join(outputs::MODEL), &json(&out.bundles[i])?)?;
    }
    Ok(())
}

/// JSON record of one selection run.
#[derive(Debug, Clone, Serialize)]
struct SelectionSummary<'a> {
    source: String,
    mode: SearchMode,
    kind: RegressorKind,
    spec: crate::regress::RegressorSpec,
    selected_columns: Vec<String>,
    best_score: f64,
    cv_mean_r2: Option<f64>,
    cv_std_r2: Option<f64>,
    cv_fold_r2: Option<&'a [f64]>,
    stop_reason: crate::selection::StopReason,
    iterations: usize,
    evaluations: usize,
    failed_evaluations: usize,
}

impl<'a> SelectionSummary<'a> {
    fn new(r: &SelectionResult, c: &'a CellResult, features: &FeatureMatrix, config: &RunConfig) -> Self {
        let cols = c.selected_columns(config.atlases.len(), &config.histogram).unwrap_or_default();
        SelectionSummary {
            source: c.source.label(),
            mode: r.mode,
            kind: r.kind,
            spec: r.best_config.spec,
            selected_columns: cols.iter().map(|&i| features.column_names[i].clone()).collect(),
            best_score: r.best_score,
            cv_mean_r2: c.cv.as_ref().map(|v| v.mean_r2),
            cv_std_r2: c.cv.as_ref().map(|v| v.std_r2),
            cv_fold_r2: c.cv.as_ref().map(|v| v.fold_r2.as_slice()),
            stop_reason: r.stop_reason,
            iterations: r.iterations(),
            evaluations: r.evaluations,
            failed_evaluations: r.failed_evaluations,
        }
    }
}

/// Output directory: explicit override, else the config's, else `./fit`.
pub fn output_dir(config: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("fit"))
}
