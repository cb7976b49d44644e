//! Cubic B-spline free-form deformation over a regular control grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, Point3};

/// Uniform cubic B-spline basis weights for the four control points
/// `cell-1 ..= cell+2` at fractional offset `u ∈ [0, 1]`.
#[inline]
pub fn cubic_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// Centered cubic B-spline β₃(t), support |t| < 2.
#[inline]
pub fn cubic_bspline(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + a * a * a / 2.0
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Control points influencing one point: the first control index per axis
/// and the four basis weights per axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Support {
    pub base: [usize; 3],
    pub weights: [[f64; 4]; 3],
}

/// Displacement field parameterized by per-control-point vectors (mm).
///
/// The grid extends one control point before and two after the fixed
/// domain on every axis, so every domain point has full cubic support.
/// Points outside that support are left in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineTransform {
    grid_origin: [f64; 3],
    grid_spacing: [f64; 3],
    grid_dims: [usize; 3],
    /// Flat `[dx, dy, dz]` per control point, x index fastest.
    displacements: Vec<f64>,
    domain: Geometry,
}

impl BSplineTransform {
    /// Zero field over `domain` with control points every `grid_spacing` mm.
    pub fn new(domain: Geometry, grid_spacing: [f64; 3]) -> Result<Self> {
        if grid_spacing.iter().any(|&g| !(g.is_finite() && g > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {grid_spacing:?}"
            )));
        }
        let dims = domain.dims();
        let spacing = domain.spacing();
        let origin = domain.origin();
        let grid_dims = std::array::from_fn(|a| {
            let extent = (dims[a] - 1) as f64 * spacing[a];
            let intervals = ((extent / grid_spacing[a]) - 1e-9).ceil().max(1.0) as usize;
            intervals + 3
        });
        let grid_origin = std::array::from_fn(|a| origin[a] - grid_spacing[a]);
        let n: usize = grid_dims.iter().product();
        Ok(BSplineTransform {
            grid_origin,
            grid_spacing,
            grid_dims,
            displacements: vec![0.0; 3 * n],
            domain,
        })
    }

    /// Field whose every control point carries the same displacement,
    /// i.e. a translation over the supported region.
    pub fn constant(domain: Geometry, grid_spacing: [f64; 3], shift: Point3) -> Result<Self> {
        let mut t = Self::new(domain, grid_spacing)?;
        for cp in t.displacements.chunks_exact_mut(3) {
            cp.copy_from_slice(&shift);
        }
        Ok(t)
    }

    /// Rebuilds a transform from its serialized parts, checking invariants.
    pub fn from_parts(
        domain: Geometry,
        grid_spacing: [f64; 3],
        displacements: Vec<f64>,
    ) -> Result<Self> {
        let mut t = Self::new(domain, grid_spacing)?;
        if displacements.len() != t.displacements.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} displacement values, got {}",
                t.displacements.len(),
                displacements.len()
            )));
        }
        if displacements.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("non-finite displacement".into()));
        }
        t.displacements = displacements;
        Ok(t)
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    pub fn grid_spacing(&self) -> [f64; 3] {
        self.grid_spacing
    }

    pub fn grid_origin(&self) -> [f64; 3] {
        self.grid_origin
    }

    pub fn domain(&self) -> &Geometry {
        &self.domain
    }

    pub fn num_control_points(&self) -> usize {
        self.grid_dims.iter().product()
    }

    pub fn displacements(&self) -> &[f64] {
        &self.displacements
    }

    pub fn displacements_mut(&mut self) -> &mut [f64] {
        &mut self.displacements
    }

    #[inline]
    pub fn control_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.grid_dims[0] * (j + self.grid_dims[1] * k)
    }

    /// World position of a control point.
    pub fn control_point_position(&self, i: usize, j: usize, k: usize) -> Point3 {
        let idx = [i, j, k];
        std::array::from_fn(|a| self.grid_origin[a] + idx[a] as f64 * self.grid_spacing[a])
    }

    #[inline]
    pub(crate) fn support(&self, p: Point3) -> Option<Support> {
        let mut base = [0usize; 3];
        let mut weights = [[0.0; 4]; 3];
        for a in 0..3 {
            let t = (p[a] - self.grid_origin[a]) / self.grid_spacing[a];
            let hi = (self.grid_dims[a] - 2) as f64;
            if !(t >= 1.0 && t <= hi) {
                return None;
            }
            let cell = (t.floor() as usize).min(self.grid_dims[a] - 3);
            weights[a] = cubic_weights(t - cell as f64);
            base[a] = cell - 1;
        }
        Some(Support { base, weights })
    }

    #[inline]
    pub(crate) fn displacement_with(&self, s: &Support) -> Point3 {
        let [gx, gy, _] = self.grid_dims;
        let mut d = [0.0; 3];
        for (c, wz) in s.weights[2].iter().enumerate() {
            for (b, wy) in s.weights[1].iter().enumerate() {
                let wzy = wz * wy;
                let row = s.base[0] + gx * (s.base[1] + b + gy * (s.base[2] + c));
                for (a, wx) in s.weights[0].iter().enumerate() {
                    let w = wzy * wx;
                    let o = 3 * (row + a);
                    d[0] += w * self.displacements[o];
                    d[1] += w * self.displacements[o + 1];
                    d[2] += w * self.displacements[o + 2];
                }
            }
        }
        d
    }

    /// Displacement vector at a world point (zero outside the grid support).
    pub fn displacement(&self, p: Point3) -> Point3 {
        match self.support(p) {
            Some(s) => self.displacement_with(&s),
            None => [0.0; 3],
        }
    }

    /// Maps a fixed-space point into moving space.
    #[inline]
    pub fn transform_point(&self, p: Point3) -> Point3 {
        let d = self.displacement(p);
        [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
    }

    /// Same field on a grid of half the spacing (exact cubic B-spline
    /// subdivision).
    pub fn refine(&self) -> Result<Self> {
        let half = self.grid_spacing.map(|g| g / 2.0);
        let mut fine = Self::new(self.domain, half)?;
        // 1D subdivision stencils: new index j -> [(old index, weight)].
        let stencils: [Vec<Vec<(usize, f64)>>; 3] = std::array::from_fn(|a| {
            let old_n = self.grid_dims[a] as i64;
            let clamp = |i: i64| i.clamp(0, old_n - 1) as usize;
            (0..fine.grid_dims[a])
                .map(|j| {
                    let m = j as i64 + 1;
                    if m % 2 == 0 {
                        let i = m / 2;
                        vec![(clamp(i - 1), 0.125), (clamp(i), 0.75), (clamp(i + 1), 0.125)]
                    } else {
                        let i = (m - 1) / 2;
                        vec![(clamp(i), 0.5), (clamp(i + 1), 0.5)]
                    }
                })
                .collect()
        });
        let [fx, fy, fz] = fine.grid_dims;
        for k in 0..fz {
            for j in 0..fy {
                for i in 0..fx {
                    let mut d = [0.0; 3];
                    for &(ok, wk) in &stencils[2][k] {
                        for &(oj, wj) in &stencils[1][j] {
                            for &(oi, wi) in &stencils[0][i] {
                                let w = wk * wj * wi;
                                let o = 3 * self.control_index(oi, oj, ok);
                                for (a, da) in d.iter_mut().enumerate() {
                                    *da += w * self.displacements[o + a];
                                }
                            }
                        }
                    }
                    let o = 3 * fine.control_index(i, j, k);
                    fine.displacements[o..o + 3].copy_from_slice(&d);
                }
            }
        }
        Ok(fine)
    }

    /// Mean displacement magnitude over the voxel centers of the domain
    /// where `include` holds.
    pub fn mean_displacement(&self, include: impl Fn(usize) -> bool) -> f64 {
        let g = self.domain;
        let (mut sum, mut n) = (0.0, 0usize);
        for idx in 0..g.len() {
            if include(idx) {
                let d = self.displacement(g.voxel_to_world(g.unravel(idx)));
                sum += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}
