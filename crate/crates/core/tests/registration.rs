//! B-spline transform, warping, MI and end-to-end registration behavior.

mod common;

use rand::seq::SliceRandom;
use rand::Rng;

use atlasmass::phantom::{generate_base, PhantomSpec};
use atlasmass::registration::{
    cubic_bspline, initial_align, mutual_information, register, segment_by_atlases, warp_mask, warp_volume, Atlas,
    BSplineTransform, RegistrationConfig,
};
use atlasmass::volume::{Geometry, Mask, Volume, AIR_HU};

fn grid() -> Geometry {
    Geometry::new([12, 10, 8], [2.0, 2.0, 3.0], [-5.0, 0.0, 4.0]).unwrap()
}

#[test]
fn constant_field_moves_every_point_by_the_shift() {
    let mut rng = common::rng(1);
    let t = BSplineTransform::constant(grid(), [8.0; 3], [1.5, -2.0, 0.25]).unwrap();
    let g = grid();
    for _ in 0..200 {
        let p: [f64; 3] = std::array::from_fn(|a| g.origin()[a] + rng.random::<f64>() * (g.extent()[a] - g.spacing()[a]));
        let q = t.transform_point(p);
        assert!((q[0] - p[0] - 1.5).abs() < 1e-12);
        assert!((q[1] - p[1] + 2.0).abs() < 1e-12);
        assert!((q[2] - p[2] - 0.25).abs() < 1e-12);
    }
}

#[test]
fn one_control_point_gives_a_separable_bump() {
    let mut t = BSplineTransform::new(grid(), [8.0; 3]).unwrap();
    let (i, j, k) = (2, 2, 2);
    let idx = t.control_index(i, j, k);
    t.displacements_mut()[3 * idx + 1] = 4.0;
    let c = t.control_point_position(i, j, k);
    let mut rng = common::rng(2);
    let g = grid();
    for _ in 0..200 {
        // inside the domain, where the grid gives full support
        let p: [f64; 3] = std::array::from_fn(|a| g.origin()[a] + rng.random::<f64>() * (g.extent()[a] - g.spacing()[a]));
        let want: f64 = 4.0 * (0..3).map(|a| cubic_bspline((p[a] - c[a]) / 8.0)).product::<f64>();
        let d = t.displacement(p);
        assert!(d[0] == 0.0 && d[2] == 0.0);
        assert!((d[1] - want).abs() < 1e-12, "{p:?}: {} vs {want}", d[1]);
    }
}

#[test]
fn whole_voxel_shift_is_an_index_shift() {
    let g = grid();
    let mut rng = common::rng(5);
    let values: Vec<f32> = (0..g.len()).map(|_| rng.random_range(-900.0..900.0)).collect();
    let v = Volume::new(g, values).unwrap();
    let t = BSplineTransform::constant(g, [8.0; 3], [2.0, 0.0, -3.0]).unwrap();
    let w = warp_volume(&t, &v, &g).unwrap();
    let [nx, ny, nz] = g.dims();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let got = w.get(i, j, k);
                if i + 1 < nx && k >= 1 {
                    assert!((got - v.get(i + 1, j, k - 1)).abs() < 1e-3, "{i},{j},{k}: {got} vs {}", v.get(i + 1, j, k - 1));
                } else {
                    assert_eq!(got, AIR_HU as f32);
                }
            }
        }
    }

    let inside: Vec<bool> = (0..g.len()).map(|_| rng.random_bool(0.4)).collect();
    let m = Mask::from_bools(g, &inside).unwrap();
    let wm = warp_mask(&t, &m, &g).unwrap();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let want = i + 1 < nx && k >= 1 && inside[g.index(i + 1, j, k - 1)];
                assert_eq!(wm.contains(g.index(i, j, k)), want);
            }
        }
    }
}

#[test]
fn empty_mask_stays_empty() {
    let g = grid();
    let mut t = BSplineTransform::new(g, [8.0; 3]).unwrap();
    for (n, d) in t.displacements_mut().iter_mut().enumerate() {
        *d = ((n * 7) % 5) as f64 - 2.0;
    }
    assert_eq!(warp_mask(&t, &Mask::empty(g), &g).unwrap().count(), 0);
}

fn identity(g: Geometry) -> BSplineTransform {
    BSplineTransform::new(g, [8.0; 3]).unwrap()
}

#[test]
fn mi_of_two_level_checkerboard_is_ln2() {
    let g = Geometry::new([8, 8, 8], [1.0; 3], [0.0; 3]).unwrap();
    let values: Vec<f32> = (0..g.len())
        .map(|i| {
            let [a, b, c] = g.unravel(i);
            if (a + b + c) % 2 == 0 { 0.0 } else { 100.0 }
        })
        .collect();
    let v = Volume::new(g, values).unwrap();
    let points: Vec<[f64; 3]> = (0..g.len()).map(|i| g.voxel_to_world(g.unravel(i))).collect();
    let mi = mutual_information(&v, &v, &identity(g), 2, &points).unwrap();
    assert!((mi - std::f64::consts::LN_2).abs() < 1e-9, "{mi}");
}

#[test]
fn mi_orders_aligned_above_shuffled_and_independent() {
    let g = Geometry::new([16, 16, 16], [1.0; 3], [0.0; 3]).unwrap();
    let mut rng = common::rng(7);
    let a: Vec<f32> = (0..g.len()).map(|_| rng.random_range(-500.0..500.0)).collect();
    let mut shuffled = a.clone();
    shuffled.shuffle(&mut rng);
    let noise: Vec<f32> = (0..g.len()).map(|_| rng.random_range(-500.0..500.0)).collect();
    let va = Volume::new(g, a).unwrap();
    let vs = Volume::new(g, shuffled).unwrap();
    let vn = Volume::new(g, noise).unwrap();
    let points: Vec<[f64; 3]> = (0..g.len()).map(|i| g.voxel_to_world(g.unravel(i))).collect();
    let t = identity(g);
    let self_mi = mutual_information(&va, &va, &t, 32, &points).unwrap();
    let perm_mi = mutual_information(&va, &vs, &t, 32, &points).unwrap();
    let noise_mi = mutual_information(&va, &vn, &t, 32, &points).unwrap();
    assert!(self_mi > 2.0, "{self_mi}");
    assert!(perm_mi < 0.1 && noise_mi < 0.1, "{perm_mi} {noise_mi}");
}

#[test]
fn centroid_alignment_recovers_a_translation() {
    let spec = PhantomSpec::small();
    let (v, _) = generate_base(&spec, 4).unwrap();
    let g = *v.geometry();
    let mut o = g.origin();
    o[0] += 10.0;
    let moved = Volume::new(Geometry::new(g.dims(), g.spacing(), o).unwrap(), v.values().to_vec()).unwrap();
    let shift = initial_align(&v, &moved).unwrap();
    assert!((shift[0] - 10.0).abs() < 1e-9 && shift[1].abs() < 1e-9 && shift[2].abs() < 1e-9, "{shift:?}");
}

fn quick_config(seed: u64) -> RegistrationConfig {
    RegistrationConfig {
        levels: 2,
        max_iterations_per_level: 100,
        seed,
        ..Default::default()
    }
}

#[test]
fn self_registration_stays_near_identity() {
    let spec = PhantomSpec::small();
    let (v, truth) = generate_base(&spec, 9).unwrap();
    let (t, report) = register(&v, &v, &quick_config(1)).unwrap();
    let body = |idx: usize| v.values()[idx] > -500.0;
    let mean = t.mean_displacement(body);
    assert!(mean <= 0.5 * spec.spacing[0], "mean displacement {mean} mm");
    assert!(report.mi_final >= report.mi_initial - 1e-9);
    let warped = warp_mask(&t, &truth.true_mask, v.geometry()).unwrap();
    assert!(warped.dice(&truth.true_mask).unwrap() >= 0.99);
}

#[test]
fn registration_is_deterministic_per_seed() {
    let spec = PhantomSpec::small();
    let (a, _) = generate_base(&spec, 1).unwrap();
    let (b, _) = generate_base(&spec, 2).unwrap();
    let (t1, r1) = register(&a, &b, &quick_config(5)).unwrap();
    let (t2, r2) = register(&a, &b, &quick_config(5)).unwrap();
    assert_eq!(t1.displacements(), t2.displacements());
    assert_eq!(r1, r2);
}

#[test]
fn atlas_segmentations_follow_atlas_order() {
    let spec = PhantomSpec::small();
    let (v, truth) = generate_base(&spec, 3).unwrap();
    let empty = Mask::empty(*v.geometry());
    let atlases = vec![
        Atlas::new(v.clone(), truth.true_mask.clone()).unwrap(),
        Atlas::new(v.clone(), empty).unwrap(),
    ];
    let masks = segment_by_atlases(&v, &atlases, &quick_config(2)).unwrap();
    assert_eq!(masks.len(), 2);
    assert!(masks[0].dice(&truth.true_mask).unwrap() >= 0.99);
    assert_eq!(masks[1].count(), 0);
}

#[test]
fn invalid_settings_are_rejected() {
    let spec = PhantomSpec::small();
    let (v, _) = generate_base(&spec, 3).unwrap();
    let coarse = RegistrationConfig { final_grid_spacing: 4.0, ..Default::default() };
    assert!(register(&v, &v, &coarse).is_err());
    let no_bins = RegistrationConfig { mi_bins: 1, ..Default::default() };
    assert!(register(&v, &v, &no_bins).is_err());
    assert!(segment_by_atlases(&v, &[], &RegistrationConfig::default()).is_err());
}
