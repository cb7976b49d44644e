//! Volumetric data model: voxel geometry, Hounsfield-unit volumes and
//! region masks, plus the resampling primitives and NIfTI-1 I/O built on
//! top of them.

mod geometry;
mod nifti;
pub(crate) mod resample;

pub use geometry::{Geometry, Point3};
pub use nifti::{load_mask, load_nifti, save_mask, save_nifti, NIFTI_HEADER_SIZE, NIFTI_VOX_OFFSET};
pub use resample::{center_of_mass, downsample, sample_trilinear, sample_trilinear_with_fill};

use crate::error::{Error, Result};

/// Hounsfield value of air; also the fill value outside a volume.
pub const AIR_HU: f64 = -1000.0;

/// A 3D field of Hounsfield values.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    values: Vec<f32>,
}

impl Volume {
    pub fn new(geometry: Geometry, values: Vec<f32>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "volume has {} values but geometry {:?} needs {}",
                values.len(),
                geometry.dims(),
                geometry.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "volume value at index {pos} is not finite"
            )));
        }
        Ok(Volume { geometry, values })
    }

    /// Volume filled with a single value.
    pub fn filled(geometry: Geometry, value: f32) -> Self {
        Volume {
            geometry,
            values: vec![value; geometry.len()],
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.geometry.index(i, j, k)]
    }

    /// Minimum and maximum stored value.
    pub fn range(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Region membership over a voxel grid.
///
/// Weights lie in `[0, 1]`; a binary mask holds only 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geometry: Geometry,
    weights: Vec<f32>,
    binary: bool,
}

impl Mask {
    /// Builds a mask, detecting whether the weights are binary.
    pub fn new(geometry: Geometry, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} weights but geometry needs {}",
                weights.len(),
                geometry.len()
            )));
        }
        if let Some(pos) = weights
            .iter()
            .position(|w| !(w.is_finite() && (0.0..=1.0).contains(w)))
        {
            return Err(Error::InvalidArgument(format!(
                "mask weight at index {pos} is outside [0, 1]"
            )));
        }
        let binary = weights.iter().all(|&w| w == 0.0 || w == 1.0);
        Ok(Mask {
            geometry,
            weights,
            binary,
        })
    }

    pub fn from_bools(geometry: Geometry, inside: &[bool]) -> Result<Self> {
        Mask::new(
            geometry,
            inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn empty(geometry: Geometry) -> Self {
        Mask {
            geometry,
            weights: vec![0.0; geometry.len()],
            binary: true,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.weights[idx] >= 1.0
    }

    /// Number of voxels with weight 1.
    pub fn count(&self) -> usize {
        self.weights.iter().filter(|&&w| w >= 1.0).count()
    }

    /// Thresholds the weights: `w >= threshold` becomes 1, else 0.
    pub fn threshold(&self, threshold: f32) -> Mask {
        Mask {
            geometry: self.geometry,
            weights: self
                .weights
                .iter()
                .map(|&w| if w >= threshold { 1.0 } else { 0.0 })
                .collect(),
            binary: true,
        }
    }

    /// The weights viewed as a volume, for resampling.
    pub fn to_volume(&self) -> Volume {
        Volume {
            geometry: self.geometry,
            values: self.weights.clone(),
        }
    }

    /// Dice overlap `2|A∩B| / (|A|+|B|)` of two binary masks; 1 when both are empty.
    pub fn dice(&self, other: &Mask) -> Result<f64> {
        if self.geometry != other.geometry {
            return Err(Error::InvalidArgument(
                "dice requires masks on the same geometry".into(),
            ));
        }
        let (mut both, mut a, mut b) = (0usize, 0usize, 0usize);
        for (&x, &y) in self.weights.iter().zip(&other.weights) {
            let (x, y) = (x >= 1.0, y >= 1.0);
            a += x as usize;
            b += y as usize;
            both += (x && y) as usize;
        }
        if a + b == 0 {
            return Ok(1.0);
        }
        Ok(2.0 * both as f64 / (a + b) as f64)
    }
}
