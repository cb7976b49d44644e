use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::config::load_atlases;
use super::fit::ModelBundle;
use crate::error::{Error, Result, ResultExt};
use crate::features::{assemble_features, feature_names};
use crate::registration::segment_by_atlases;
use crate::regress::predict;
use crate::volume::load_nifti;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub predicted_weight_g: f64,
}

/// Identifier of a volume file: its name without `.nii`.
pub fn volume_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".nii").map(str::to_string).unwrap_or(name)
}

/// Segments each volume with the bundle's atlases and applies its model.
pub fn predict_volumes(bundle: &ModelBundle, volumes: &[PathBuf]) -> Result<Vec<Prediction>> {
    if volumes.is_empty() {
        return Ok(Vec::new());
    }
    for a in &bundle.atlases {
        for p in [&a.volume, &a.mask] {
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!(
                    "model references missing atlas file {}",
                    p.display()
                )));
            }
        }
    }
    let expected = feature_names(bundle.atlases.len(), &bundle.histogram);
    if expected != bundle.feature_names {
        return Err(Error::Format("model feature layout does not match its atlases".into()));
    }
    let atlases = load_atlases(&bundle.atlases)?;
    let mut rows = Vec::with_capacity(volumes.len());
    for path in volumes {
        let v = load_nifti(path)?;
        let masks = segment_by_atlases(&v, &atlases, &bundle.registration)
            .with_context(|| format!("segmenting {}", path.display()))?;
        rows.push(assemble_features(&v, &masks, &bundle.histogram)?);
    }
    let x = DMatrix::from_fn(rows.len(), expected.len(), |i, j| rows[i][j]);
    let yhat = predict(&bundle.model, &x)?;
    Ok(volumes
        .iter()
        .zip(yhat)
        .map(|(p, y)| Prediction {
            id: volume_id(p),
            predicted_weight_g: y,
        })
        .collect())
}

pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut s = String::from("id,predicted_weight_g\n");
    for p in preds {
        let _ = writeln!(s, "{},{}", p.id, p.predicted_weight_g);
    }
    s
}
