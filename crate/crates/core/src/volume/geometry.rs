use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or vector in world coordinates (mm).
pub type Point3 = [f64; 3];

/// Voxel grid placement: dimensions, voxel spacing (mm) and the world
/// position of the center of voxel (0, 0, 0).
///
/// Voxels are stored with x varying fastest, as in NIfTI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "geometry dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "geometry spacing must be positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "geometry origin must be finite, got {origin:?}"
            )));
        }
        Ok(Geometry {
            dims,
            spacing,
            origin,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// World extent covered by the voxel grid (dims · spacing).
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.spacing[a])
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World position of a voxel center.
    #[inline]
    pub fn voxel_to_world(&self, ijk: [usize; 3]) -> Point3 {
        std::array::from_fn(|a| self.origin[a] + ijk[a] as f64 * self.spacing[a])
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn world_to_continuous(&self, p: Point3) -> Point3 {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// World position of the center of the grid.
    pub fn center(&self) -> Point3 {
        std::array::from_fn(|a| {
            self.origin[a] + (self.dims[a] as f64 - 1.0) * self.spacing[a] / 2.0
        })
    }
}
