//! Segments one phantom subject with two atlases and prints the region
//! descriptors of every atlas mask and of their majority vote.
//!
//! cargo run --example extract_features -- [seed]

use atlasmass::features::{assemble_features, extract_region_features, feature_names, mean_mask, HistogramSpec};
use atlasmass::phantom::{generate_cohort, PhantomSpec};
use atlasmass::registration::{segment_by_atlases, RegistrationConfig};

fn main() -> atlasmass::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let spec = PhantomSpec::small();
    let cohort = generate_cohort(2, 2, seed, &spec)?;
    let subject = &cohort.subjects[0];
    let hist = HistogramSpec::default();
    let masks = segment_by_atlases(subject, &cohort.atlases, &RegistrationConfig { seed, ..Default::default() })?;

    let truth = &cohort.truths[0];
    let mut regions: Vec<(String, _)> = masks.iter().enumerate().map(|(j, m)| (format!("atlas{}", j + 1), m.clone())).collect();
    regions.push(("mean".into(), mean_mask(&masks)?));
    regions.push(("truth".into(), truth.true_mask.clone()));
    println!("{:<7} {:>6} {:>8} {:>7} {:>7} {:>7} {:>6}", "region", "voxels", "mean_hu", "std_hu", "skew", "kurt", "dice");
    for (name, mask) in &regions {
        let f = extract_region_features(subject, mask, &hist)?;
        println!(
            "{name:<7} {:>6} {:>8.2} {:>7.2} {:>7.3} {:>7.3} {:>6.3}",
            f.voxel_count,
            f.mean_hu,
            f.std_hu,
            f.skewness,
            f.kurtosis,
            mask.dice(&truth.true_mask)?
        );
    }
    let row = assemble_features(subject, &masks, &hist)?;
    let names = feature_names(masks.len(), &hist);
    println!("feature row has {} columns, e.g.", row.len());
    for j in [0, 2, 6 + 6, names.len() - 1] {
        println!("  {:<20} {}", names[j], row[j]);
    }
    println!("true weight {:.1} g, dissected {:.1} g", truth.true_weight_g, truth.dissected_weight_g);
    Ok(())
}
