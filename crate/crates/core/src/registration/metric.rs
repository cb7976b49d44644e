//! Parzen-window mutual information between fixed and moving intensities.
//!
//! Intensities are mapped linearly onto continuous bin coordinates
//! `c ∈ [0, bins-1]` using the min/max over the sample set; bin `j` covers
//! `[j-0.5, j+0.5)`. Each sample spreads unit mass with a cubic B-spline
//! kernel one bin wide, integrated over the bins, so a sample touches at
//! most two bins per axis and the estimate is twice differentiable in the
//! moving intensity.

use super::bspline::{cubic_bspline, BSplineTransform, Support};
use crate::error::{Error, Result};
use crate::volume::{resample, Point3, Volume, AIR_HU};

/// CDF of the centered cubic B-spline β₃ on `[-2, 2]`.
fn cubic_bspline_cdf(t: f64) -> f64 {
    if t <= -2.0 {
        0.0
    } else if t < -1.0 {
        let a = 2.0 + t;
        a * a * a * a / 24.0
    } else if t <= 0.0 {
        0.5 + 2.0 * t / 3.0 - t * t * t / 3.0 - t * t * t * t / 8.0
    } else if t < 2.0 {
        1.0 - cubic_bspline_cdf(-t)
    } else {
        1.0
    }
}

/// Bin weights of one sample: lower bin, weights of that bin and the next,
/// and the derivative of the lower weight with respect to `c` (the upper
/// derivative is its negation).
#[derive(Debug, Clone, Copy)]
pub(crate) struct BinWeights {
    pub bin: usize,
    pub w: [f64; 2],
    pub dw_lower: f64,
}

#[inline]
pub(crate) fn bin_weights(c: f64, bins: usize) -> BinWeights {
    let c = c.clamp(0.0, (bins - 1) as f64);
    let bin = (c.floor() as usize).min(bins - 1);
    // Kernel density k(s) = 4 β₃(4s), support |s| < 1/2.
    let s = bin as f64 + 0.5 - c;
    let lower = cubic_bspline_cdf(4.0 * s);
    let dw_lower = -4.0 * cubic_bspline(4.0 * s);
    if bin + 1 >= bins {
        BinWeights {
            bin,
            w: [1.0, 0.0],
            dw_lower: 0.0,
        }
    } else {
        BinWeights {
            bin,
            w: [lower, 1.0 - lower],
            dw_lower,
        }
    }
}

/// Linear map from intensities to continuous bin coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BinMap {
    min: f64,
    scale: f64,
}

impl BinMap {
    pub fn from_values(values: &[f64], bins: usize, side: &str) -> Result<Self> {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if !(hi > lo) {
            return Err(Error::DegenerateInput(format!(
                "{side} intensities are constant over the sample set"
            )));
        }
        Ok(BinMap {
            min: lo,
            scale: (bins - 1) as f64 / (hi - lo),
        })
    }

    #[inline]
    pub fn coordinate(&self, v: f64) -> f64 {
        (v - self.min) * self.scale
    }

    /// d(coordinate)/d(intensity).
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Joint histogram and derived log-ratio table.
pub(crate) struct JointHistogram {
    bins: usize,
    joint: Vec<f64>,
}

impl JointHistogram {
    pub fn new(bins: usize) -> Self {
        JointHistogram {
            bins,
            joint: vec![0.0; bins * bins],
        }
    }

    #[inline]
    pub fn add(&mut self, f: &BinWeights, m: &BinWeights) {
        let b = self.bins;
        for (da, &wa) in f.w.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            let row = (f.bin + da) * b;
            for (db, &wb) in m.w.iter().enumerate() {
                if wb != 0.0 {
                    self.joint[row + m.bin + db] += wa * wb;
                }
            }
        }
    }

    /// Normalizes and returns (MI in nats, table of ln p(a,b)/p_m(b)).
    pub fn finish(mut self) -> (f64, Vec<f64>) {
        let b = self.bins;
        let total: f64 = self.joint.iter().sum();
        for p in &mut self.joint {
            *p /= total;
        }
        let mut pf = vec![0.0; b];
        let mut pm = vec![0.0; b];
        for a in 0..b {
            for m in 0..b {
                let p = self.joint[a * b + m];
                pf[a] += p;
                pm[m] += p;
            }
        }
        let mut mi = 0.0;
        let mut log_ratio = vec![0.0; b * b];
        for a in 0..b {
            for m in 0..b {
                let p = self.joint[a * b + m];
                if p > 0.0 {
                    mi += p * (p / (pf[a] * pm[m])).ln();
                    log_ratio[a * b + m] = (p / pm[m]).ln();
                }
            }
        }
        (mi.max(0.0), log_ratio)
    }
}

/// Mutual information (nats) of fixed intensities at `sample_points` against
/// moving intensities at the transformed points.
pub fn mutual_information(
    fixed: &Volume,
    moving: &Volume,
    transform: &BSplineTransform,
    bins: usize,
    sample_points: &[Point3],
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument("MI needs at least 2 bins".into()));
    }
    if sample_points.is_empty() {
        return Err(Error::InvalidArgument("MI needs sample points".into()));
    }
    let fixed_values: Vec<f64> = sample_points
        .iter()
        .map(|&p| resample::sample_trilinear(fixed, p))
        .collect();
    let moving_values: Vec<f64> = sample_points
        .iter()
        .map(|&p| resample::sample_trilinear(moving, transform.transform_point(p)))
        .collect();
    mi_from_values(&fixed_values, &moving_values, bins)
}

pub(crate) fn mi_from_values(fixed: &[f64], moving: &[f64], bins: usize) -> Result<f64> {
    let fmap = BinMap::from_values(fixed, bins, "fixed")?;
    let mmap = BinMap::from_values(moving, bins, "moving")?;
    let mut h = JointHistogram::new(bins);
    for (&f, &m) in fixed.iter().zip(moving) {
        h.add(
            &bin_weights(fmap.coordinate(f), bins),
            &bin_weights(mmap.coordinate(m), bins),
        );
    }
    Ok(h.finish().0)
}

/// Fixed-image samples (world position and intensity) shared by the value
/// and gradient evaluations.
pub(crate) struct FixedSamples {
    pub points: Vec<Point3>,
    pub values: Vec<f64>,
}

/// MI value and its gradient with respect to every control-point
/// displacement (flat, same layout as the transform).
pub(crate) fn mi_and_gradient(
    samples: &FixedSamples,
    moving: &Volume,
    transform: &BSplineTransform,
    bins: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = samples.points.len();
    let mut moving_values = Vec::with_capacity(n);
    let mut grads: Vec<Point3> = Vec::with_capacity(n);
    let mut supports: Vec<Option<Support>> = Vec::with_capacity(n);
    let mg = moving.geometry();
    for &p in &samples.points {
        let s = transform.support(p);
        let q = match &s {
            Some(s) => {
                let d = transform.displacement_with(s);
                [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
            }
            None => p,
        };
        let (v, g) = resample::interpolate_with_gradient(moving, mg.world_to_continuous(q), AIR_HU);
        moving_values.push(v);
        grads.push(g);
        supports.push(s);
    }
    let fmap = BinMap::from_values(&samples.values, bins, "fixed")?;
    let mmap = BinMap::from_values(&moving_values, bins, "moving")?;
    let fw: Vec<BinWeights> = samples
        .values
        .iter()
        .map(|&v| bin_weights(fmap.coordinate(v), bins))
        .collect();
    let mw: Vec<BinWeights> = moving_values
        .iter()
        .map(|&v| bin_weights(mmap.coordinate(v), bins))
        .collect();
    let mut h = JointHistogram::new(bins);
    for (f, m) in fw.iter().zip(&mw) {
        h.add(f, m);
    }
    let (mi, log_ratio) = h.finish();

    let [gx, gy, _] = transform.grid_dims();
    let mut gradient = vec![0.0; transform.displacements().len()];
    let norm = mmap.scale() / n as f64;
    for s in 0..n {
        let (f, m) = (&fw[s], &mw[s]);
        if m.dw_lower == 0.0 {
            continue;
        }
        let Some(sup) = &supports[s] else { continue };
        // dMI/dc_m = Σ_a w_f(a) · dw_m(b)/dc · ln(p(a,b)/p_m(b))
        let mut dmi_dc = 0.0;
        for (da, &wa) in f.w.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            let row = (f.bin + da) * bins + m.bin;
            dmi_dc += wa * m.dw_lower * (log_ratio[row] - log_ratio[row + 1]);
        }
        let scale = dmi_dc * norm;
        if scale == 0.0 {
            continue;
        }
        let g = grads[s];
        let gv = [g[0] * scale, g[1] * scale, g[2] * scale];
        for (c, wz) in sup.weights[2].iter().enumerate() {
            for (b, wy) in sup.weights[1].iter().enumerate() {
                let wzy = wz * wy;
                let row = sup.base[0] + gx * (sup.base[1] + b + gy * (sup.base[2] + c));
                for (a, wx) in sup.weights[0].iter().enumerate() {
                    let w = wzy * wx;
                    let o = 3 * (row + a);
                    gradient[o] += w * gv[0];
                    gradient[o + 1] += w * gv[1];
                    gradient[o + 2] += w * gv[2];
                }
            }
        }
    }
    Ok((mi, gradient))
}

/// MI value only, for held-out evaluation.
pub(crate) fn mi_value(
    samples: &FixedSamples,
    moving: &Volume,
    transform: &BSplineTransform,
    bins: usize,
) -> Result<f64> {
    let mg = moving.geometry();
    let moving_values: Vec<f64> = samples
        .points
        .iter()
        .map(|&p| {
            resample::interpolate(moving, mg.world_to_continuous(transform.transform_point(p)), AIR_HU)
        })
        .collect();
    mi_from_values(&samples.values, &moving_values, bins)
}
