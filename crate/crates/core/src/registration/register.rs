use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bspline::BSplineTransform;
use super::metric::{mi_and_gradient, mi_value, FixedSamples};
use super::warp::warp_mask_with_threshold;
use crate::error::{Error, Result, ResultExt};
use crate::seeds;
use crate::volume::{center_of_mass, downsample, Mask, Point3, Volume};

/// HU threshold separating body from air for center-of-mass alignment.
pub const BODY_THRESHOLD_HU: f64 = -500.0;

/// Settings of the multi-resolution B-spline registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub levels: usize,
    pub max_iterations_per_level: usize,
    pub mi_bins: usize,
    pub samples_per_iteration: usize,
    /// Control-point spacing (mm) at the finest level.
    pub final_grid_spacing: f64,
    pub sgd_a: f64,
    #[serde(rename = "sgd_A")]
    pub sgd_big_a: f64,
    pub sgd_alpha: f64,
    /// Threshold applied to propagated mask weights.
    pub mask_threshold: f32,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            levels: 3,
            max_iterations_per_level: 200,
            mi_bins: 32,
            samples_per_iteration: 2048,
            final_grid_spacing: 16.0,
            sgd_a: 1.0,
            sgd_big_a: 50.0,
            sgd_alpha: 0.602,
            mask_threshold: 0.5,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("registration config: {m}")));
        if self.levels < 1 {
            return bad("levels must be at least 1");
        }
        if self.max_iterations_per_level < 1 || self.samples_per_iteration < 1 {
            return bad("iteration and sample counts must be positive");
        }
        if self.mi_bins < 2 {
            return bad("mi_bins must be at least 2");
        }
        if !(self.final_grid_spacing.is_finite() && self.final_grid_spacing > 0.0) {
            return bad("final_grid_spacing must be positive");
        }
        if !(self.sgd_a > 0.0 && self.sgd_big_a >= 0.0 && self.sgd_alpha > 0.0) {
            return bad("step schedule parameters must be positive");
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold <= 1.0) {
            return bad("mask_threshold must lie in (0, 1]");
        }
        Ok(())
    }

    /// Gain sequence `a / (A + t)^α`.
    pub fn step_size(&self, t: usize) -> f64 {
        self.sgd_a / (self.sgd_big_a + t as f64).powf(self.sgd_alpha)
    }
}

/// Similarity before and after registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// MI of the center-of-mass initialization (nats, finest level).
    pub mi_initial: f64,
    /// MI of the returned transform on the same samples.
    pub mi_final: f64,
    pub iterations_used: Vec<usize>,
}

/// Translation (mm) aligning the intensity centroid of `moving` with that of
/// `fixed`: `com(moving) - com(fixed)`.
pub fn initial_align(fixed: &Volume, moving: &Volume) -> Result<Point3> {
    let cf = center_of_mass(fixed, BODY_THRESHOLD_HU).context("fixed volume")?;
    let cm = center_of_mass(moving, BODY_THRESHOLD_HU).context("moving volume")?;
    Ok(std::array::from_fn(|a| cm[a] - cf[a]))
}

fn draw_samples(volume: &Volume, count: usize, rng: &mut impl Rng) -> FixedSamples {
    let g = volume.geometry();
    let n = g.len();
    let mut points = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = rng.random_range(0..n);
        points.push(g.voxel_to_world(g.unravel(idx)));
        values.push(volume.values()[idx] as f64);
    }
    FixedSamples { points, values }
}

/// Elastic registration of `moving` onto `fixed`.
///
/// The returned transform maps fixed-space points into moving space. Each
/// pyramid level runs stochastic gradient ascent on MI with freshly drawn
/// samples and keeps the iterate scoring best on a held-out sample set;
/// the next level starts from that iterate on a grid of half the spacing.
pub fn register(
    fixed: &Volume,
    moving: &Volume,
    config: &RegistrationConfig,
) -> Result<(BSplineTransform, SimilarityReport)> {
    config.validate()?;
    let domain = *fixed.geometry();
    let max_spacing = domain.spacing().into_iter().fold(0.0, f64::max);
    if config.final_grid_spacing <= max_spacing {
        return Err(Error::InvalidArgument(format!(
            "final grid spacing {} mm must exceed the voxel spacing {max_spacing} mm",
            config.final_grid_spacing
        )));
    }
    let shift = initial_align(fixed, moving)?;
    let levels = config.levels;
    let coarse = config.final_grid_spacing * (1usize << (levels - 1)) as f64;
    let mut transform = BSplineTransform::constant(domain, [coarse; 3], shift)?;
    let mut iterations_used = Vec::with_capacity(levels);
    let mut finest: Option<(FixedSamples, Volume)> = None;

    for level in 0..levels {
        let factor = 1usize << (levels - 1 - level);
        if level > 0 {
            transform = transform.refine()?;
        }
        let fixed_l = downsample(fixed, factor)?;
        let moving_l = downsample(moving, factor)?;
        let mut rng = seeds::rng(seeds::derive(config.seed, &[level as u64]));
        let holdout = draw_samples(&fixed_l, config.samples_per_iteration, &mut rng);
        let step_mm = fixed_l.geometry().spacing().iter().sum::<f64>() / 3.0;
        let bins = config.mi_bins;

        let mut best_mi = mi_value(&holdout, &moving_l, &transform, bins)
            .with_context(|| format!("level {level}, initial evaluation"))?;
        let mut best = transform.clone();
        for t in 0..config.max_iterations_per_level {
            let samples = draw_samples(&fixed_l, config.samples_per_iteration, &mut rng);
            let (_, grad) = mi_and_gradient(&samples, &moving_l, &transform, bins)
                .with_context(|| format!("level {level}, iteration {t}"))?;
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if !gmax.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite MI gradient at level {level}, iteration {t}"
                )));
            }
            if gmax == 0.0 {
                continue;
            }
            let gain = config.step_size(t) * step_mm / gmax;
            for (d, g) in transform.displacements_mut().iter_mut().zip(&grad) {
                *d += gain * g;
            }
            let mi = mi_value(&holdout, &moving_l, &transform, bins)
                .with_context(|| format!("level {level}, iteration {t}"))?;
            if mi > best_mi {
                best_mi = mi;
                best = transform.clone();
            }
        }
        iterations_used.push(config.max_iterations_per_level);
        transform = best;
        if level + 1 == levels {
            finest = Some((holdout, moving_l));
        }
    }

    let (holdout, moving_fine) = finest.expect("at least one level");
    let initial = BSplineTransform::constant(domain, transform.grid_spacing(), shift)?;
    let mi_initial = mi_value(&holdout, &moving_fine, &initial, config.mi_bins)?;
    let mut mi_final = mi_value(&holdout, &moving_fine, &transform, config.mi_bins)?;
    if mi_final < mi_initial {
        transform = initial;
        mi_final = mi_initial;
    }
    Ok((
        transform,
        SimilarityReport {
            mi_initial,
            mi_final,
            iterations_used,
        },
    ))
}

/// One atlas propagated onto a target scan.
#[derive(Debug, Clone)]
pub struct AtlasSegmentation {
    pub mask: Mask,
    pub transform: BSplineTransform,
    pub report: SimilarityReport,
}

/// An annotated scan used as a deformable template.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub volume: Volume,
    pub mask: Mask,
}

impl Atlas {
    pub fn new(volume: Volume, mask: Mask) -> Result<Self> {
        if volume.geometry() != mask.geometry() {
            return Err(Error::InvalidArgument(
                "atlas mask geometry differs from its volume".into(),
            ));
        }
        if !mask.is_binary() {
            return Err(Error::InvalidArgument("atlas mask must be binary".into()));
        }
        Ok(Atlas { volume, mask })
    }
}

/// Registration seed used for the atlas at `index`.
pub fn atlas_seed(config: &RegistrationConfig, index: usize) -> u64 {
    seeds::derive(config.seed, &[seeds::stage::REGISTRATION, index as u64])
}

/// Registers every atlas onto `target` and propagates its mask. Atlases are
/// processed in parallel; the output order follows the input order.
pub fn segment_by_atlases_detailed(
    target: &Volume,
    atlases: &[Atlas],
    config: &RegistrationConfig,
) -> Result<Vec<AtlasSegmentation>> {
    if atlases.is_empty() {
        return Err(Error::InvalidArgument("at least one atlas is required".into()));
    }
    atlases
        .par_iter()
        .enumerate()
        .map(|(index, atlas)| {
            let cfg = RegistrationConfig {
                seed: atlas_seed(config, index),
                ..config.clone()
            };
            let (transform, report) = register(target, &atlas.volume, &cfg)
                .with_context(|| format!("atlas {index}"))?;
            let mask = warp_mask_with_threshold(
                &transform,
                &atlas.mask,
                target.geometry(),
                config.mask_threshold,
            )
            .with_context(|| format!("atlas {index}"))?;
            Ok(AtlasSegmentation {
                mask,
                transform,
                report,
            })
        })
        .collect()
}

/// Masks of [`segment_by_atlases_detailed`], one per atlas.
pub fn segment_by_atlases(
    target: &Volume,
    atlases: &[Atlas],
    config: &RegistrationConfig,
) -> Result<Vec<Mask>> {
    Ok(segment_by_atlases_detailed(target, atlases, config)?
        .into_iter()
        .map(|s| s.mask)
        .collect())
}
