//! Generates a synthetic cohort, prints its weight statistics and writes it
//! to disk with a ready-to-run fit configuration.
//!
//! cargo run --example phantom_cohort -- <out-dir> [subjects] [atlases] [seed] [--small]

use atlasmass::phantom::{generate_cohort, PhantomSpec};
use atlasmass::pipeline::{write_phantom_cohort, FIT_CONFIG};

fn main() -> atlasmass::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let small = args.iter().any(|a| a == "--small");
    let pos: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    let out = pos.first().map_or_else(|| std::env::temp_dir().join("atlasmass_cohort"), |p| p.into());
    let num = |i: usize, d: u64| pos.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (n, m, seed) = (num(1, 12) as usize, num(2, 2) as usize, num(3, 7));
    let spec = if small { PhantomSpec::small() } else { PhantomSpec::default() };

    let cohort = generate_cohort(n, m, seed, &spec)?;
    let w = cohort.dissected_weights();
    let mean = w.iter().sum::<f64>() / n as f64;
    let (lo, hi) = w.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    println!("{n} subjects: dissected weight {lo:.1}..{hi:.1} g (mean {mean:.1}, spread {:.0}%)", 100.0 * (hi - lo) / mean);
    for (i, t) in cohort.truths.iter().enumerate().take(5) {
        println!(
            "  subject {:>2}: scale {:.3}/{:.3}/{:.3}, mask {} voxels, true {:.1} g, dissected {:.1} g",
            i + 1,
            t.scale[0],
            t.scale[1],
            t.scale[2],
            t.true_mask.count(),
            t.true_weight_g,
            t.dissected_weight_g
        );
    }

    write_phantom_cohort(n, m, seed, &spec, &out)?;
    println!("wrote {} (fit with: atlasmass fit --config {})", out.display(), out.join(FIT_CONFIG).display());
    Ok(())
}
