use super::bspline::BSplineTransform;
use crate::error::{Error, Result};
use crate::volume::{resample, Geometry, Mask, Volume, AIR_HU};

fn warp_values(transform: &BSplineTransform, source: &Volume, target: &Geometry, fill: f64) -> Vec<f32> {
    let sg = source.geometry();
    (0..target.len())
        .map(|idx| {
            let x = target.voxel_to_world(target.unravel(idx));
            let q = transform.transform_point(x);
            resample::interpolate(source, sg.world_to_continuous(q), fill) as f32
        })
        .collect()
}

/// Resamples `moving` onto `target`: each output voxel takes the moving
/// intensity at the transformed position of its center.
pub fn warp_volume(transform: &BSplineTransform, moving: &Volume, target: &Geometry) -> Result<Volume> {
    Volume::new(*target, warp_values(transform, moving, target, AIR_HU))
}

/// Propagates a binary mask through the transform: trilinear warp of the
/// weights followed by thresholding at 0.5.
pub fn warp_mask(transform: &BSplineTransform, mask: &Mask, target: &Geometry) -> Result<Mask> {
    warp_mask_with_threshold(transform, mask, target, 0.5)
}

pub fn warp_mask_with_threshold(
    transform: &BSplineTransform,
    mask: &Mask,
    target: &Geometry,
    threshold: f32,
) -> Result<Mask> {
    if !mask.is_binary() {
        return Err(Error::InvalidArgument("warp_mask needs a binary mask".into()));
    }
    let weights = warp_values(transform, &mask.to_volume(), target, 0.0);
    Ok(Mask::new(*target, weights)?.threshold(threshold))
}
