//! Writes a small ramp volume and a mask to NIfTI, reads them back and
//! prints the header fields that survive the round trip.
//!
//! cargo run --example nifti_roundtrip -- [dir]

use atlasmass::volume::{load_mask, load_nifti, save_mask, save_nifti, Geometry, Mask, Volume};

fn main() -> atlasmass::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, Into::into);
    let geometry = Geometry::new([16, 12, 8], [0.977, 0.977, 2.0], [-7.3, -5.4, 0.0])?;
    let values: Vec<f32> = (0..geometry.len())
        .map(|i| {
            let [x, y, z] = geometry.unravel(i);
            -1000.0 + 50.0 * (x + y + z) as f32 + 0.125
        })
        .collect();
    let volume = Volume::new(geometry, values)?;
    let inside: Vec<bool> = volume.values().iter().map(|&v| v > 0.0).collect();
    let mask = Mask::from_bools(geometry, &inside)?;

    let vpath = dir.join("ramp.nii");
    let mpath = dir.join("ramp_mask.nii");
    save_nifti(&volume, &vpath)?;
    save_mask(&mask, &mpath)?;

    let back = load_nifti(&vpath)?;
    let back_mask = load_mask(&mpath)?;
    let g = back.geometry();
    println!("{}: dims {:?}, spacing {:?}, origin {:?}", vpath.display(), g.dims(), g.spacing(), g.origin());
    println!("values identical: {}", back.values() == volume.values());
    println!("HU range {:?}", back.range());
    println!("mask voxels {} (written {})", back_mask.count(), mask.count());
    Ok(())
}
