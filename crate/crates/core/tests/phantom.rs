//! Phantom generator: ground-truth bookkeeping, geometry and cohort
//! statistics.

use atlasmass::phantom::{
    deform, generate_base, generate_cohort, generate_scaled, integrate_weight, layout, write_cohort, PhantomSpec,
};
use atlasmass::volume::{load_mask, load_nifti, Mask, Volume};

/// Mass by explicit triple loop, accumulated in voxel-index order.
fn oracle_weight(v: &Volume, m: &Mask) -> f64 {
    let g = v.geometry();
    let [nx, ny, nz] = g.dims();
    let cm3 = g.spacing().iter().product::<f64>() / 1000.0;
    let mut total = 0.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if m.contains(g.index(i, j, k)) {
                    total += (1.0 + v.get(i, j, k) as f64 / 1000.0) * cm3;
                }
            }
        }
    }
    total
}

#[test]
fn true_weight_matches_independent_summation() {
    let spec = PhantomSpec::small();
    for seed in 0..4 {
        let (v, t) = generate_base(&spec, seed).unwrap();
        let w = oracle_weight(&v, &t.true_mask);
        assert!((t.true_weight_g - w).abs() <= 1e-9 * w, "seed {seed}");
        let (dv, dt) = deform(&v, &t, &spec, 100 + seed, spec.deformation_magnitude).unwrap();
        let dw = oracle_weight(&dv, &dt.true_mask);
        assert!((dt.true_weight_g - dw).abs() <= 1e-9 * dw);
        assert_eq!(integrate_weight(&dv, &dt.true_mask).unwrap(), dt.true_weight_g);
    }
}

#[test]
fn masks_are_binary_inside_the_body() {
    let spec = PhantomSpec::small();
    let (v, t) = generate_base(&spec, 2).unwrap();
    assert!(t.true_mask.is_binary());
    assert_eq!(t.true_mask.geometry(), v.geometry());
    assert!(t.true_mask.count() > 0);
    for idx in 0..v.geometry().len() {
        if t.true_mask.contains(idx) {
            assert!(v.values()[idx] > -500.0);
        }
    }
}

#[test]
fn distractor_lobe_has_target_intensity_but_is_not_masked() {
    let spec = PhantomSpec::default();
    let (v, t) = generate_base(&spec, 3).unwrap();
    let g = v.geometry();
    // Lobes sit below the target region along z, centered at (±22, 12, -56) mm.
    let mut lobe = Vec::new();
    let mut masked_below = 0;
    for idx in 0..g.len() {
        let p = g.voxel_to_world(g.unravel(idx));
        if p[2] < -46.0 && t.true_mask.contains(idx) {
            masked_below += 1;
        }
        let r = ((p[0].abs() - 22.0) / 10.0).powi(2) + ((p[1] - 12.0) / 8.0).powi(2) + ((p[2] + 56.0) / 8.0).powi(2);
        // the lobe is clipped by the body surface
        if r <= 1.0 && v.values()[idx] > -500.0 {
            lobe.push(v.values()[idx] as f64);
        }
    }
    assert_eq!(masked_below, 0);
    assert!(lobe.len() > 100);
    let mean = lobe.iter().sum::<f64>() / lobe.len() as f64;
    assert!((mean - spec.muscle.mean).abs() < 3.0, "lobe mean {mean}");
}

#[test]
fn zero_noise_dissection_is_exact() {
    let spec = PhantomSpec { dissection_bias: [1.0, 1.0], dissection_noise_sd: 0.0, ..PhantomSpec::small() };
    let c = generate_cohort(3, 1, 4, &spec).unwrap();
    assert_eq!(c.dissected_weights(), c.true_weights());
}

#[test]
fn uniform_scaling_scales_weight_by_the_cube() {
    let spec = PhantomSpec::default();
    let (_, base) = generate_scaled(&spec, [1.0; 3], 5).unwrap();
    for s in [0.9, 1.1] {
        let (_, scaled) = generate_scaled(&spec, [s; 3], 5).unwrap();
        let ratio = scaled.true_weight_g / base.true_weight_g;
        let want: f64 = s * s * s;
        assert!((ratio / want - 1.0).abs() < 0.02, "s={s}: {ratio} vs {want}");
    }
}

#[test]
fn default_deformations_keep_mask_volume_within_ten_percent() {
    let spec = PhantomSpec::default();
    let (v, t) = generate_base(&spec, 6).unwrap();
    for seed in 0..5 {
        let (_, dt) = deform(&v, &t, &spec, seed, spec.deformation_magnitude).unwrap();
        let ratio = dt.true_mask.count() as f64 / t.true_mask.count() as f64;
        assert!((ratio - 1.0).abs() < 0.10, "seed {seed}: {ratio}");
    }
}

#[test]
fn oversized_deformations_are_rejected() {
    let spec = PhantomSpec::small();
    let (v, t) = generate_base(&spec, 1).unwrap();
    // Control spacing 24 mm: magnitudes must stay below 12 mm.
    assert!(deform(&v, &t, &spec, 1, 12.0).is_err());
    assert!(PhantomSpec { deformation_magnitude: 50.0, ..PhantomSpec::small() }.validate().is_err());
    assert!(PhantomSpec { dissection_bias: [0.99, 0.95], ..PhantomSpec::small() }.validate().is_err());
}

#[test]
fn cohort_counts_spread_and_determinism() {
    let spec = PhantomSpec::default();
    let a = generate_cohort(40, 3, 17, &spec).unwrap();
    assert_eq!(a.atlases.len(), 3);
    assert_eq!(a.subjects.len(), 40);
    assert_eq!(a.truths.len(), 40);
    let w = a.dissected_weights();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    assert!((hi - lo) / mean >= 0.20, "spread {}", (hi - lo) / mean);
    for atlas in &a.atlases {
        assert!(atlas.mask.is_binary());
    }

    let small = PhantomSpec::small();
    let b1 = generate_cohort(4, 2, 9, &small).unwrap();
    let b2 = generate_cohort(4, 2, 9, &small).unwrap();
    assert_eq!(b1.dissected_weights(), b2.dissected_weights());
    for (x, y) in b1.subjects.iter().zip(&b2.subjects) {
        assert_eq!(x, y);
    }
    for (x, y) in b1.atlases.iter().zip(&b2.atlases) {
        assert_eq!((&x.volume, &x.mask), (&y.volume, &y.mask));
    }
    let b3 = generate_cohort(4, 2, 10, &small).unwrap();
    assert_ne!(b1.dissected_weights(), b3.dissected_weights());
    assert!(generate_cohort(1, 1, 0, &small).is_err());
    assert!(generate_cohort(3, 0, 0, &small).is_err());
}

#[test]
fn subjects_depend_only_on_seed_and_index() {
    let small = PhantomSpec::small();
    let short = generate_cohort(2, 1, 21, &small).unwrap();
    let long = generate_cohort(5, 2, 21, &small).unwrap();
    assert_eq!(short.subjects[..], long.subjects[..2]);
    assert_eq!(short.atlases[0].volume, long.atlases[0].volume);
}

#[test]
fn written_cohort_has_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_cohort(3, 2, 8, &PhantomSpec::small()).unwrap();
    write_cohort(&c, dir.path()).unwrap();
    let root = dir.path();
    for (j, id) in ["atlas_01", "atlas_02"].iter().enumerate() {
        assert_eq!(load_nifti(root.join(layout::ATLAS_DIR).join(format!("{id}.nii"))).unwrap(), c.atlases[j].volume);
        assert!(load_mask(root.join(layout::ATLAS_DIR).join(format!("{id}_mask.nii"))).unwrap().is_binary());
    }
    for i in 0..3 {
        let v = load_nifti(root.join(layout::SUBJECT_DIR).join(format!("subject_{:03}.nii", i + 1))).unwrap();
        assert_eq!(v, c.subjects[i]);
        let m = load_mask(root.join(layout::TRUTH_MASK_DIR).join(format!("subject_{:03}_mask.nii", i + 1))).unwrap();
        assert_eq!(m, c.truths[i].true_mask);
    }
    let csv = std::fs::read_to_string(root.join(layout::WEIGHTS)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id,dissected_weight_g");
    assert_eq!(lines.len(), 4);
    let parsed: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(parsed, c.truths[0].dissected_weight_g);
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join(layout::TRUTH)).unwrap()).unwrap();
    assert_eq!(truth.as_array().unwrap().len(), 3);
}
