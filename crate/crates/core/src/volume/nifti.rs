//! Single-file NIfTI-1 subset: uncompressed, little-endian, 16-bit signed
//! integer or 32-bit float payloads. Orientation is ignored; the grid origin
//! is taken from the qform (or sform) offsets when present.

use std::fs;
use std::path::Path;

use super::{Geometry, Mask, Volume};
use crate::error::{Error, Result};

pub const NIFTI_HEADER_SIZE: usize = 348;
pub const NIFTI_VOX_OFFSET: usize = 352;

const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const UNITS_MM: u8 = 2;

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn put_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(b: &mut [u8], off: usize, v: f32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    datatype: i16,
    vox_offset: usize,
    slope: f64,
    inter: f64,
    paired: bool,
}

fn parse_header(b: &[u8]) -> Result<Header> {
    if b.len() < NIFTI_HEADER_SIZE {
        return Err(Error::Format(format!(
            "file holds {} bytes, a NIfTI-1 header needs {NIFTI_HEADER_SIZE}",
            b.len()
        )));
    }
    let sizeof_hdr = i32_at(b, 0);
    if sizeof_hdr != NIFTI_HEADER_SIZE as i32 {
        let hint = if i32::from_be_bytes(b[0..4].try_into().unwrap()) == 348 {
            " (big-endian files are not supported)"
        } else {
            ""
        };
        return Err(Error::Format(format!(
            "header size field is {sizeof_hdr}, expected 348{hint}"
        )));
    }
    let paired = match &b[344..348] {
        b"n+1\0" => false,
        b"ni1\0" => true,
        other => {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let ndim = i16_at(b, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("dim[0] = {ndim} out of range")));
    }
    let mut dims = [1usize; 3];
    for d in 1..=ndim as usize {
        let n = i16_at(b, 40 + 2 * d);
        if n < 1 {
            return Err(Error::Format(format!("dim[{d}] = {n} is not positive")));
        }
        if d <= 3 {
            dims[d - 1] = n as usize;
        } else if n != 1 {
            return Err(Error::Format(format!(
                "only 3D volumes are supported, dim[{d}] = {n}"
            )));
        }
    }
    let datatype = i16_at(b, 70);
    if datatype != DT_INT16 && datatype != DT_FLOAT32 {
        return Err(Error::UnsupportedDatatype(datatype));
    }
    let mut spacing = [1.0; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let p = f32_at(b, 76 + 4 * (a + 1)).abs() as f64;
        if a < ndim as usize {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Format(format!("pixdim[{}] = {p} is not positive", a + 1)));
            }
            *s = p;
        }
    }
    let vox_offset = f32_at(b, 108);
    if !(vox_offset.is_finite() && vox_offset >= 0.0) {
        return Err(Error::Format(format!("vox_offset {vox_offset} is invalid")));
    }
    let mut slope = f32_at(b, 112) as f64;
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let mut inter = f32_at(b, 116) as f64;
    if !inter.is_finite() {
        inter = 0.0;
    }
    let origin = if i16_at(b, 252) > 0 {
        [268, 272, 276].map(|o| f32_at(b, o) as f64)
    } else if i16_at(b, 254) > 0 {
        [292, 308, 324].map(|o| f32_at(b, o) as f64)
    } else {
        [0.0; 3]
    };
    Ok(Header {
        dims,
        spacing,
        origin,
        datatype,
        vox_offset: vox_offset as usize,
        slope,
        inter,
        paired,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a NIfTI-1 volume, applying the scale slope and intercept.
///
/// A `ni1` header is paired with its `.img` sibling holding the payload.
pub fn load_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let header = parse_header(&bytes).map_err(|e| e.context(path.display().to_string()))?;
    let payload_owner;
    let payload: &[u8] = if header.paired {
        payload_owner = read(&path.with_extension("img"))?;
        &payload_owner
    } else {
        &bytes
    };
    let n: usize = header.dims.iter().product();
    let width = if header.datatype == DT_INT16 { 2 } else { 4 };
    let start = header.vox_offset;
    let end = start + n * width;
    if payload.len() < end {
        return Err(Error::Format(format!(
            "{}: payload truncated, need {end} bytes, found {}",
            path.display(),
            payload.len()
        )));
    }
    let raw = &payload[start..end];
    let (slope, inter) = (header.slope, header.inter);
    let values: Vec<f32> = if header.datatype == DT_INT16 {
        raw.chunks_exact(2)
            .map(|c| (slope * i16::from_le_bytes([c[0], c[1]]) as f64 + inter) as f32)
            .collect()
    } else if slope == 1.0 && inter == 0.0 {
        raw.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        raw.chunks_exact(4)
            .map(|c| (slope * f32::from_le_bytes(c.try_into().unwrap()) as f64 + inter) as f32)
            .collect()
    };
    let geometry = Geometry::new(header.dims, header.spacing, header.origin)?;
    Volume::new(geometry, values).map_err(|e| e.context(path.display().to_string()))
}

fn encode_header(geometry: &Geometry) -> Vec<u8> {
    let mut h = vec![0u8; NIFTI_VOX_OFFSET];
    h[0..4].copy_from_slice(&(NIFTI_HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let dims = geometry.dims();
    put_i16(&mut h, 40, 3);
    for (a, &d) in dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * a, d as i16);
    }
    for d in 4..8 {
        put_i16(&mut h, 40 + 2 * d, 1);
    }
    put_i16(&mut h, 70, DT_FLOAT32);
    put_i16(&mut h, 72, 32);
    put_f32(&mut h, 76, 1.0);
    let spacing = geometry.spacing();
    for (a, &s) in spacing.iter().enumerate() {
        put_f32(&mut h, 80 + 4 * a, s as f32);
    }
    put_f32(&mut h, 108, NIFTI_VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    h[123] = UNITS_MM;
    let descrip = b"atlasmass";
    h[148..148 + descrip.len()].copy_from_slice(descrip);
    let origin = geometry.origin();
    // qform: identity rotation, offset = origin; sform mirrors it.
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    for a in 0..3 {
        put_f32(&mut h, 268 + 4 * a, origin[a] as f32);
        let row = 280 + 16 * a;
        put_f32(&mut h, row + 4 * a, spacing[a] as f32);
        put_f32(&mut h, row + 12, origin[a] as f32);
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

/// Writes an uncompressed single-file NIfTI-1 with a float32 payload.
///
/// Spacing and origin are stored as float32.
pub fn save_nifti(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = volume.geometry();
    if g.is_empty() || g.dims().iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidArgument(format!(
            "cannot write volume with dims {:?}",
            g.dims()
        )));
    }
    let mut bytes = encode_header(g);
    bytes.reserve(volume.values().len() * 4);
    for v in volume.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_nifti(&mask.to_volume(), path)
}

/// Reads a mask stored as a NIfTI volume of weights in `[0, 1]`.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let v = load_nifti(path)?;
    let g = *v.geometry();
    Mask::new(g, v.into_values()).map_err(|e| e.context(path.display().to_string()))
}
