//! Synthetic scans with known region masks, weights and deformations.
//!
//! A phantom is an ellipsoidal body in air with a dorsal spine rod, two
//! caudal bone rods, and a target region made of two muscle ellipsoids
//! flanking the spine. A lobe of identical tissue sits just caudal to each
//! muscle ellipsoid but is not part of the target, so intensity alone
//! cannot separate target from distractor.
//!
//! Anatomy is defined in millimetres around the volume center, so specs
//! with coarser voxels describe the same body.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::registration::{warp_mask, warp_volume, Atlas, BSplineTransform};
use crate::seeds;
use crate::volume::{save_mask, save_nifti, Geometry, Mask, Point3, Volume, AIR_HU};

/// Normal HU distribution of one tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tissue {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub body: Tissue,
    pub muscle: Tissue,
    pub bone: Tissue,
    /// Standard deviation (mm) of each control-point displacement component.
    pub deformation_magnitude: f64,
    /// Deformation control-point spacing in units of the smallest voxel spacing.
    pub deformation_grid_ratio: f64,
    /// Range of the multiplicative dissection loss.
    pub dissection_bias: [f64; 2],
    /// Additive dissection noise (g).
    pub dissection_noise_sd: f64,
    /// Subjects and atlases are scaled per axis by `U(1 − j, 1 + j)`.
    pub size_jitter: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64, 64, 96],
            spacing: [2.0, 2.0, 2.0],
            body: Tissue { mean: 40.0, sd: 15.0 },
            muscle: Tissue { mean: 60.0, sd: 10.0 },
            bone: Tissue { mean: 800.0, sd: 50.0 },
            deformation_magnitude: 3.0,
            deformation_grid_ratio: 12.0,
            dissection_bias: [0.95, 0.99],
            dissection_noise_sd: 2.0,
            size_jitter: 0.1,
        }
    }
}

impl PhantomSpec {
    /// Same anatomy on 4 mm voxels, for quick experiments.
    pub fn small() -> Self {
        PhantomSpec {
            dims: [32, 32, 48],
            spacing: [4.0, 4.0, 4.0],
            deformation_grid_ratio: 6.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("phantom spec: {m}")));
        for t in [self.body, self.muscle, self.bone] {
            if !(t.mean.is_finite() && t.sd.is_finite() && t.sd >= 0.0) {
                return bad(format!("invalid tissue distribution {t:?}"));
            }
        }
        let [lo, hi] = self.dissection_bias;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("invalid dissection bias range {lo}..{hi}"));
        }
        if !(self.dissection_noise_sd >= 0.0 && self.dissection_noise_sd.is_finite()) {
            return bad("dissection noise must be non-negative".into());
        }
        if !(0.0..0.5).contains(&self.size_jitter) {
            return bad("size jitter must lie in [0, 0.5)".into());
        }
        if !(self.deformation_grid_ratio >= 1.0) {
            return bad("deformation grid ratio must be at least 1".into());
        }
        let limit = self.min_spacing() * self.deformation_grid_ratio / 2.0;
        if !(self.deformation_magnitude >= 0.0 && self.deformation_magnitude < limit) {
            return bad(format!(
                "deformation magnitude {} must be below {limit} mm",
                self.deformation_magnitude
            ));
        }
        self.geometry().map(|_| ())
    }

    fn min_spacing(&self) -> f64 {
        self.spacing.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Volume geometry centered on the world origin.
    pub fn geometry(&self) -> Result<Geometry> {
        let origin = std::array::from_fn(|a| -((self.dims[a] - 1) as f64) * self.spacing[a] / 2.0);
        Geometry::new(self.dims, self.spacing, origin)
    }

    pub fn deformation_grid_spacing(&self) -> f64 {
        self.min_spacing() * self.deformation_grid_ratio
    }
}

/// Hidden ground truth of one phantom.
#[derive(Debug, Clone)]
pub struct PhantomTruth {
    pub true_mask: Mask,
    pub true_weight_g: f64,
    pub dissected_weight_g: f64,
    /// Maps the phantom's frame into the undeformed generator frame.
    pub deformation: BSplineTransform,
    pub scale: [f64; 3],
}

/// Serializable summary of a [`PhantomTruth`] (the mask goes to NIfTI).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub true_weight_g: f64,
    pub dissected_weight_g: f64,
    pub mask_voxels: usize,
    pub scale: [f64; 3],
    pub deformation: BSplineTransform,
}

/// Tissue density (g/cm³) as a function of HU. Hidden from the pipeline.
pub fn density(hu: f64) -> f64 {
    1.0 + hu / 1000.0
}

/// Mass (g) of the masked voxels under [`density`].
pub fn integrate_weight(volume: &Volume, mask: &Mask) -> Result<f64> {
    if volume.geometry() != mask.geometry() {
        return Err(Error::InvalidArgument("mask geometry differs from the volume".into()));
    }
    let cm3 = volume.geometry().voxel_volume() / 1000.0;
    Ok(volume
        .values()
        .iter()
        .zip(mask.weights())
        .filter(|(_, &w)| w >= 1.0)
        .map(|(&hu, _)| density(hu as f64) * cm3)
        .sum())
}

struct Ellipsoid {
    center: Point3,
    radii: Point3,
}

impl Ellipsoid {
    fn contains(&self, p: Point3) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Cylinder along z.
struct Rod {
    x: f64,
    y: f64,
    radius: f64,
    z: [f64; 2],
}

impl Rod {
    fn contains(&self, p: Point3) -> bool {
        (p[0] - self.x).powi(2) + (p[1] - self.y).powi(2) <= self.radius * self.radius
            && p[2] >= self.z[0]
            && p[2] <= self.z[1]
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Label {
    Air,
    Body,
    Bone,
    Target,
    Distractor,
}

struct Anatomy {
    body: Ellipsoid,
    bones: Vec<Rod>,
    muscles: Vec<Ellipsoid>,
    lobes: Vec<Ellipsoid>,
}

impl Anatomy {
    fn reference() -> Self {
        let e = |center: Point3, radii: Point3| Ellipsoid { center, radii };
        Anatomy {
            body: e([0.0, 0.0, 0.0], [50.0, 40.0, 80.0]),
            bones: vec![
                Rod { x: 0.0, y: 22.0, radius: 5.0, z: [-70.0, 70.0] },
                Rod { x: 30.0, y: -18.0, radius: 4.0, z: [-65.0, -15.0] },
                Rod { x: -30.0, y: -18.0, radius: 4.0, z: [-65.0, -15.0] },
            ],
            muscles: vec![
                e([22.0, 12.0, 5.0], [16.0, 14.0, 50.0]),
                e([-22.0, 12.0, 5.0], [16.0, 14.0, 50.0]),
            ],
            lobes: vec![
                e([22.0, 12.0, -56.0], [14.0, 12.0, 14.0]),
                e([-22.0, 12.0, -56.0], [14.0, 12.0, 14.0]),
            ],
        }
    }

    /// Label at a point of the generator frame scaled by `scale`.
    fn label(&self, p: Point3, scale: [f64; 3]) -> Label {
        let q = [p[0] / scale[0], p[1] / scale[1], p[2] / scale[2]];
        if !self.body.contains(q) {
            return Label::Air;
        }
        if self.bones.iter().any(|r| r.contains(q)) {
            return Label::Bone;
        }
        if self.muscles.iter().any(|m| m.contains(q)) {
            return Label::Target;
        }
        if self.lobes.iter().any(|l| l.contains(q)) {
            return Label::Distractor;
        }
        Label::Body
    }

    /// Whether the full target ellipsoids lie inside the body.
    fn target_inside_body(&self) -> bool {
        let steps = 24;
        self.muscles.iter().all(|m| {
            (0..=steps).all(|i| {
                let theta = std::f64::consts::PI * i as f64 / steps as f64;
                (0..2 * steps).all(|j| {
                    let phi = std::f64::consts::PI * j as f64 / steps as f64;
                    let dir = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                    self.body.contains(std::array::from_fn(|a| m.center[a] + m.radii[a] * dir[a]))
                })
            })
        })
    }
}

fn normal(t: Tissue) -> Result<Normal<f64>> {
    Normal::new(t.mean, t.sd).map_err(|e| Error::InvalidArgument(format!("tissue distribution: {e}")))
}

fn uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).expect("lo < hi").sample(rng)
    }
}

fn dissect(true_weight: f64, spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> f64 {
    let [lo, hi] = spec.dissection_bias;
    let factor = uniform(lo, hi, rng);
    let noise = if spec.dissection_noise_sd > 0.0 {
        Normal::new(0.0, spec.dissection_noise_sd).expect("validated").sample(rng)
    } else {
        0.0
    };
    true_weight * factor + noise
}

/// Voxelizes the reference anatomy scaled per axis by `scale`.
pub fn generate_scaled(spec: &PhantomSpec, scale: [f64; 3], seed: u64) -> Result<(Volume, PhantomTruth)> {
    spec.validate()?;
    let anatomy = Anatomy::reference();
    if !anatomy.target_inside_body() {
        return Err(Error::InvalidArgument("target region escapes the body".into()));
    }
    let geometry = spec.geometry()?;
    let mut rng = seeds::rng(seed);
    let (body, muscle, bone) = (normal(spec.body)?, normal(spec.muscle)?, normal(spec.bone)?);
    let mut values = Vec::with_capacity(geometry.len());
    let mut inside = Vec::with_capacity(geometry.len());
    let mut body_voxels = 0usize;
    for idx in 0..geometry.len() {
        let p = geometry.voxel_to_world(geometry.unravel(idx));
        let label = anatomy.label(p, scale);
        let hu = match label {
            Label::Air => AIR_HU,
            Label::Body => body.sample(&mut rng),
            Label::Bone => bone.sample(&mut rng),
            Label::Target | Label::Distractor => muscle.sample(&mut rng),
        };
        body_voxels += (label != Label::Air) as usize;
        values.push(hu as f32);
        inside.push(label == Label::Target);
    }
    if body_voxels == geometry.len() {
        return Err(Error::InvalidArgument("body does not fit inside the volume".into()));
    }
    let volume = Volume::new(geometry, values)?;
    let true_mask = Mask::from_bools(geometry, &inside)?;
    if true_mask.count() == 0 {
        return Err(Error::InvalidArgument("target region contains no voxel".into()));
    }
    let true_weight_g = integrate_weight(&volume, &true_mask)?;
    let dissected_weight_g = dissect(true_weight_g, spec, &mut rng);
    let deformation = BSplineTransform::new(geometry, [spec.deformation_grid_spacing(); 3])?;
    Ok((
        volume,
        PhantomTruth {
            true_mask,
            true_weight_g,
            dissected_weight_g,
            deformation,
            scale,
        },
    ))
}

/// Unscaled, undeformed phantom.
pub fn generate_base(spec: &PhantomSpec, seed: u64) -> Result<(Volume, PhantomTruth)> {
    generate_scaled(spec, [1.0; 3], seed)
}

/// Random smooth field with control values drawn from `N(0, magnitude²)`.
pub fn random_deformation(spec: &PhantomSpec, magnitude: f64, rng: &mut ChaCha8Rng) -> Result<BSplineTransform> {
    let mut t = BSplineTransform::new(spec.geometry()?, [spec.deformation_grid_spacing(); 3])?;
    if magnitude > 0.0 {
        let n = Normal::new(0.0, magnitude).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for d in t.displacements_mut() {
            *d = n.sample(rng);
        }
    }
    Ok(t)
}

/// Applies a random smooth deformation to a phantom and its mask, and
/// recomputes the true weight on the warped data.
pub fn deform(
    volume: &Volume,
    truth: &PhantomTruth,
    spec: &PhantomSpec,
    seed: u64,
    magnitude: f64,
) -> Result<(Volume, PhantomTruth)> {
    let limit = spec.min_spacing() * spec.deformation_grid_ratio / 2.0;
    if !(magnitude >= 0.0 && magnitude < limit) {
        return Err(Error::InvalidArgument(format!(
            "deformation magnitude {magnitude} must be below {limit} mm"
        )));
    }
    let mut rng = seeds::rng(seed);
    let deformation = random_deformation(spec, magnitude, &mut rng)?;
    let target = *volume.geometry();
    let warped = warp_volume(&deformation, volume, &target)?;
    let true_mask = warp_mask(&deformation, &truth.true_mask, &target)?;
    let true_weight_g = integrate_weight(&warped, &true_mask)?;
    let dissected_weight_g = dissect(true_weight_g, spec, &mut rng);
    Ok((
        warped,
        PhantomTruth {
            true_mask,
            true_weight_g,
            dissected_weight_g,
            deformation,
            scale: truth.scale,
        },
    ))
}

/// Atlases, subjects and their hidden truths.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub atlases: Vec<Atlas>,
    pub atlas_truths: Vec<PhantomTruth>,
    pub subjects: Vec<Volume>,
    pub truths: Vec<PhantomTruth>,
}

impl Cohort {
    pub fn dissected_weights(&self) -> Vec<f64> {
        self.truths.iter().map(|t| t.dissected_weight_g).collect()
    }

    pub fn true_weights(&self) -> Vec<f64> {
        self.truths.iter().map(|t| t.true_weight_g).collect()
    }
}

fn jitter(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let j = spec.size_jitter;
    std::array::from_fn(|_| uniform(1.0 - j, 1.0 + j, rng))
}

/// `m_atlases` undeformed annotated phantoms and `n` deformed subjects,
/// each with its own size jitter. Deterministic per seed.
pub fn generate_cohort(n: usize, m_atlases: usize, seed: u64, spec: &PhantomSpec) -> Result<Cohort> {
    if n < 2 {
        return Err(Error::InvalidArgument("a cohort needs at least two subjects".into()));
    }
    if m_atlases < 1 {
        return Err(Error::InvalidArgument("a cohort needs at least one atlas".into()));
    }
    spec.validate()?;
    let stage = seeds::derive(seed, &[seeds::stage::PHANTOM]);
    let atlas_parts: Vec<(Volume, PhantomTruth)> = (0..m_atlases)
        .into_par_iter()
        .map(|j| {
            let s = seeds::derive(stage, &[0, j as u64]);
            let mut rng = seeds::rng(s);
            let scale = jitter(spec, &mut rng);
            generate_scaled(spec, scale, rng.random()).with_context(|| format!("atlas {j}"))
        })
        .collect::<Result<_>>()?;
    let subject_parts: Vec<(Volume, PhantomTruth)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = seeds::derive(stage, &[1, i as u64]);
            let mut rng = seeds::rng(s);
            let scale = jitter(spec, &mut rng);
            let (v, t) = generate_scaled(spec, scale, rng.random())?;
            deform(&v, &t, spec, rng.random(), spec.deformation_magnitude)
                .with_context(|| format!("subject {i}"))
        })
        .collect::<Result<_>>()?;
    let mut atlases = Vec::with_capacity(m_atlases);
    let mut atlas_truths = Vec::with_capacity(m_atlases);
    for (v, t) in atlas_parts {
        atlases.push(Atlas::new(v, t.true_mask.clone())?);
        atlas_truths.push(t);
    }
    let (subjects, truths) = subject_parts.into_iter().unzip();
    Ok(Cohort {
        atlases,
        atlas_truths,
        subjects,
        truths,
    })
}

pub fn atlas_id(j: usize) -> String {
    format!("atlas_{:02}", j + 1)
}

pub fn subject_id(i: usize) -> String {
    format!("subject_{:03}", i + 1)
}

/// Relative paths of a materialized cohort.
pub mod layout {
    pub const ATLAS_DIR: &str = "atlases";
    pub const SUBJECT_DIR: &str = "subjects";
    pub const TRUTH_MASK_DIR: &str = "truth_masks";
    pub const WEIGHTS: &str = "weights.csv";
    pub const TRUTH: &str = "truth.json";
}

/// Writes a cohort directory: atlas volumes and masks, subject volumes,
/// `weights.csv` (id, dissected_weight_g), and the hidden truth
/// (`truth.json` plus true masks) for tests.
pub fn write_cohort(cohort: &Cohort, out: &Path) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let atlas_dir = out.join(layout::ATLAS_DIR);
    let subject_dir = out.join(layout::SUBJECT_DIR);
    let truth_dir = out.join(layout::TRUTH_MASK_DIR);
    for d in [&atlas_dir, &subject_dir, &truth_dir] {
        mkdir(d)?;
    }
    for (j, a) in cohort.atlases.iter().enumerate() {
        let id = atlas_id(j);
        save_nifti(&a.volume, &atlas_dir.join(format!("{id}.nii")))?;
        save_mask(&a.mask, &atlas_dir.join(format!("{id}_mask.nii")))?;
    }
    let mut records = Vec::with_capacity(cohort.subjects.len());
    let weights_path = out.join(layout::WEIGHTS);
    let mut w = csv::Writer::from_path(&weights_path)?;
    w.write_record(["id", "dissected_weight_g"])?;
    for (i, (v, t)) in cohort.subjects.iter().zip(&cohort.truths).enumerate() {
        let id = subject_id(i);
        save_nifti(v, &subject_dir.join(format!("{id}.nii")))?;
        save_mask(&t.true_mask, &truth_dir.join(format!("{id}_mask.nii")))?;
        w.write_record([id.clone(), t.dissected_weight_g.to_string()])?;
        records.push(TruthRecord {
            id,
            true_weight_g: t.true_weight_g,
            dissected_weight_g: t.dissected_weight_g,
            mask_voxels: t.true_mask.count(),
            scale: t.scale,
            deformation: t.deformation.clone(),
        });
    }
    w.flush().map_err(|e| Error::io(&weights_path, e))?;
    let truth_path = out.join(layout::TRUTH);
    let json = serde_json::to_string(&records)?;
    std::fs::write(&truth_path, json).map_err(|e| Error::io(&truth_path, e))
}
