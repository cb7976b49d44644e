use super::{Geometry, Point3, Volume, AIR_HU};
use crate::error::{Error, Result};

/// Trilinear interpolation at a world point; outside the voxel-center hull
/// the air value is returned.
pub fn sample_trilinear(volume: &Volume, point: Point3) -> f64 {
    sample_trilinear_with_fill(volume, point, AIR_HU)
}

pub fn sample_trilinear_with_fill(volume: &Volume, point: Point3, fill: f64) -> f64 {
    let c = volume.geometry().world_to_continuous(point);
    interpolate(volume, c, fill)
}

/// Coordinates this far (in voxels) past the outer centers still count as
/// inside, so rounding in a transform does not turn edge voxels into fill.
const EDGE_SLACK: f64 = 1e-9;

/// Per-axis lower corner index and fractional offset, or `None` when the
/// coordinate falls outside `[0, dim - 1]`.
#[inline]
fn axis_cell(c: f64, dim: usize) -> Option<(usize, f64)> {
    let max = (dim - 1) as f64;
    if !(c >= -EDGE_SLACK && c <= max + EDGE_SLACK) {
        return None;
    }
    let c = c.clamp(0.0, max);
    if dim == 1 {
        return Some((0, 0.0));
    }
    let i0 = (c.floor() as usize).min(dim - 2);
    Some((i0, c - i0 as f64))
}

#[inline]
pub(crate) fn interpolate(volume: &Volume, c: Point3, fill: f64) -> f64 {
    let g = volume.geometry();
    let dims = g.dims();
    let (Some((i, tx)), Some((j, ty)), Some((k, tz))) = (
        axis_cell(c[0], dims[0]),
        axis_cell(c[1], dims[1]),
        axis_cell(c[2], dims[2]),
    ) else {
        return fill;
    };
    let v = volume.values();
    let sx = usize::from(dims[0] > 1);
    let sy = if dims[1] > 1 { dims[0] } else { 0 };
    let sz = if dims[2] > 1 { dims[0] * dims[1] } else { 0 };
    let base = g.index(i, j, k);
    let at = |o: usize| v[base + o] as f64;
    let c00 = at(0) * (1.0 - tx) + at(sx) * tx;
    let c10 = at(sy) * (1.0 - tx) + at(sy + sx) * tx;
    let c01 = at(sz) * (1.0 - tx) + at(sz + sx) * tx;
    let c11 = at(sz + sy) * (1.0 - tx) + at(sz + sy + sx) * tx;
    let c0 = c00 * (1.0 - ty) + c10 * ty;
    let c1 = c01 * (1.0 - ty) + c11 * ty;
    c0 * (1.0 - tz) + c1 * tz
}

/// Trilinear value and its spatial gradient (HU per mm) at continuous voxel
/// coordinates. Outside the domain the fill value and a zero gradient are
/// returned.
#[inline]
pub(crate) fn interpolate_with_gradient(volume: &Volume, c: Point3, fill: f64) -> (f64, Point3) {
    let g = volume.geometry();
    let dims = g.dims();
    let (Some((i, tx)), Some((j, ty)), Some((k, tz))) = (
        axis_cell(c[0], dims[0]),
        axis_cell(c[1], dims[1]),
        axis_cell(c[2], dims[2]),
    ) else {
        return (fill, [0.0; 3]);
    };
    let v = volume.values();
    let sx = usize::from(dims[0] > 1);
    let sy = if dims[1] > 1 { dims[0] } else { 0 };
    let sz = if dims[2] > 1 { dims[0] * dims[1] } else { 0 };
    let base = g.index(i, j, k);
    let at = |o: usize| v[base + o] as f64;
    let (v000, v100, v010, v110) = (at(0), at(sx), at(sy), at(sy + sx));
    let (v001, v101, v011, v111) = (at(sz), at(sz + sx), at(sz + sy), at(sz + sy + sx));

    let c00 = v000 + (v100 - v000) * tx;
    let c10 = v010 + (v110 - v010) * tx;
    let c01 = v001 + (v101 - v001) * tx;
    let c11 = v011 + (v111 - v011) * tx;
    let c0 = c00 + (c10 - c00) * ty;
    let c1 = c01 + (c11 - c01) * ty;
    let value = c0 + (c1 - c0) * tz;

    let dx0 = (v100 - v000) + ((v110 - v010) - (v100 - v000)) * ty;
    let dx1 = (v101 - v001) + ((v111 - v011) - (v101 - v001)) * ty;
    let dx = dx0 + (dx1 - dx0) * tz;
    let dy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * tz;
    let dz = c1 - c0;
    let s = g.spacing();
    (value, [dx / s[0], dy / s[1], dz / s[2]])
}

/// Intensity-weighted centroid in world mm, with weights `max(HU - threshold, 0)`.
pub fn center_of_mass(volume: &Volume, threshold: f64) -> Result<Point3> {
    let g = volume.geometry();
    let [nx, ny, nz] = g.dims();
    let mut total = 0.0;
    let mut acc = [0.0f64; 3];
    let values = volume.values();
    let mut idx = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let w = values[idx] as f64 - threshold;
                idx += 1;
                if w > 0.0 {
                    total += w;
                    acc[0] += w * i as f64;
                    acc[1] += w * j as f64;
                    acc[2] += w * k as f64;
                }
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "no voxel above {threshold} HU for center of mass"
        )));
    }
    let (o, s) = (g.origin(), g.spacing());
    Ok(std::array::from_fn(|a| o[a] + s[a] * acc[a] / total))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Smooths along one axis and keeps every `factor`-th sample.
///
/// `data` has shape `dims`; the result has `dims[axis]` replaced by
/// `ceil(dims[axis] / factor)`. Kernel weights are renormalized at the
/// borders so constants are preserved.
fn smooth_decimate_axis(
    data: &[f64],
    dims: [usize; 3],
    axis: usize,
    factor: usize,
    kernel: &[f64],
) -> (Vec<f64>, [usize; 3]) {
    let radius = (kernel.len() / 2) as i64;
    let n = dims[axis];
    let out_n = n.div_ceil(factor);
    let mut out_dims = dims;
    out_dims[axis] = out_n;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let out_strides = [1, out_dims[0], out_dims[0] * out_dims[1]];
    let mut out = vec![0.0; out_dims.iter().product()];
    // Iterate over all lines along `axis`.
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let (a1, a2) = (others[0], others[1]);
    for p2 in 0..dims[a2] {
        for p1 in 0..dims[a1] {
            let in_base = p1 * strides[a1] + p2 * strides[a2];
            let out_base = p1 * out_strides[a1] + p2 * out_strides[a2];
            for o in 0..out_n {
                let center = (o * factor) as i64;
                let (mut sum, mut wsum) = (0.0, 0.0);
                for (t, &w) in kernel.iter().enumerate() {
                    let pos = center + t as i64 - radius;
                    if pos < 0 || pos >= n as i64 {
                        continue;
                    }
                    sum += w * data[in_base + pos as usize * strides[axis]];
                    wsum += w;
                }
                out[out_base + o * out_strides[axis]] = sum / wsum;
            }
        }
    }
    (out, out_dims)
}

/// Gaussian smoothing (σ = factor/2 voxels per axis) followed by decimation.
///
/// Voxel `i` of the result sits at voxel `i·factor` of the input, so the
/// origin is unchanged and the spacing is multiplied by `factor`.
pub fn downsample(volume: &Volume, factor: usize) -> Result<Volume> {
    if factor < 1 {
        return Err(Error::InvalidArgument(
            "downsample factor must be at least 1".into(),
        ));
    }
    if factor == 1 {
        return Ok(volume.clone());
    }
    let g = volume.geometry();
    let kernel = gaussian_kernel(0.5 * factor as f64);
    let mut data: Vec<f64> = volume.values().iter().map(|&v| v as f64).collect();
    let mut dims = g.dims();
    for axis in 0..3 {
        let (d, nd) = smooth_decimate_axis(&data, dims, axis, factor, &kernel);
        data = d;
        dims = nd;
    }
    let spacing = g.spacing().map(|s| s * factor as f64);
    let geometry = Geometry::new(dims, spacing, g.origin())?;
    Volume::new(geometry, data.into_iter().map(|v| v as f32).collect())
}
