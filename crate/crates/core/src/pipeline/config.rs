use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::features::HistogramSpec;
use crate::registration::{Atlas, RegistrationConfig};
use crate::regress::{CVProtocol, RegressorKind};
use crate::selection::{AnnealingSchedule, SearchSpace};
use crate::seeds;
use crate::volume::{load_mask, load_nifti, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasPaths {
    pub volume: PathBuf,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPath {
    pub id: String,
    pub volume: PathBuf,
}

/// One `fit` run. Relative paths are resolved against the directory of
/// the configuration file. Every random stream is derived from `seed`; the
/// seeds inside the registration and CV sections are overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub atlases: Vec<AtlasPaths>,
    pub subjects: Vec<SubjectPath>,
    /// CSV with columns `id` and the target weight in grams.
    pub weights_csv: PathBuf,
    #[serde(default)]
    pub histogram: HistogramSpec,
    #[serde(default)]
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub cv: CVProtocol,
    #[serde(default)]
    pub annealing: AnnealingSchedule,
    #[serde(default)]
    pub search_space: SearchSpace,
    #[serde(default = "all_kinds")]
    pub kinds: Vec<RegressorKind>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

fn all_kinds() -> Vec<RegressorKind> {
    RegressorKind::ALL.to_vec()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for a in &mut self.atlases {
            fix(&mut a.volume);
            fix(&mut a.mask);
        }
        for s in &mut self.subjects {
            fix(&mut s.volume);
        }
        fix(&mut self.weights_csv);
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    /// Checks settings and the existence of every referenced file.
    pub fn validate(&self) -> Result<()> {
        if self.atlases.is_empty() {
            return Err(Error::InvalidArgument("config lists no atlases".into()));
        }
        if self.subjects.len() < self.cv.folds.max(2) {
            return Err(Error::InvalidArgument(format!(
                "{} subjects cannot fill {} folds",
                self.subjects.len(),
                self.cv.folds
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidArgument("config lists no regressor kinds".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.subjects {
            if !ids.insert(&s.id) {
                return Err(Error::InvalidArgument(format!("duplicate subject id {}", s.id)));
            }
        }
        self.histogram.validate()?;
        self.registration.validate()?;
        self.cv.validate()?;
        self.annealing.validate()?;
        self.search_space.validate()?;
        let paths = self
            .atlases
            .iter()
            .flat_map(|a| [&a.volume, &a.mask])
            .chain(self.subjects.iter().map(|s| &s.volume))
            .chain(std::iter::once(&self.weights_csv));
        for p in paths {
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!("missing input file {}", p.display())));
            }
        }
        Ok(())
    }

    /// Registration settings with the seed derived from the master seed.
    pub fn registration_config(&self) -> RegistrationConfig {
        registration_config_for(&self.registration, self.seed)
    }

    pub fn cv_protocol(&self) -> CVProtocol {
        CVProtocol {
            seed: seeds::derive(self.seed, &[seeds::stage::CV]),
            ..self.cv
        }
    }

    pub fn anneal_seed(&self) -> u64 {
        seeds::derive(self.seed, &[seeds::stage::ANNEAL])
    }
}

pub(crate) fn registration_config_for(base: &RegistrationConfig, master: u64) -> RegistrationConfig {
    RegistrationConfig {
        seed: seeds::derive(master, &[seeds::stage::REGISTRATION]),
        ..base.clone()
    }
}

pub fn load_atlases(paths: &[AtlasPaths]) -> Result<Vec<Atlas>> {
    paths
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let v = load_nifti(&p.volume)?;
            let m = load_mask(&p.mask)?;
            Atlas::new(v, m).with_context(|| format!("atlas {j} ({})", p.volume.display()))
        })
        .collect()
}

pub fn load_subjects(subjects: &[SubjectPath]) -> Result<Vec<Volume>> {
    subjects
        .iter()
        .map(|s| load_nifti(&s.volume).with_context(|| format!("subject {}", s.id)))
        .collect()
}

/// Reads `id,<weight>` rows; the weight is the second column.
pub fn read_weights(path: &Path) -> Result<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
    let mut out = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let w: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .filter(|w: &f64| w.is_finite())
            .ok_or_else(|| Error::Format(format!("{}: row {i} has no numeric weight", path.display())))?;
        if out.insert(id.clone(), w).is_some() {
            return Err(Error::Format(format!("{}: duplicate id {id}", path.display())));
        }
    }
    Ok(out)
}
