//! Signed-rank test against full enumeration and reference values
//! computed with scipy.stats.wilcoxon.

mod common;

use proptest::prelude::*;

use atlasmass::stats::{wilcoxon_signed_rank, WilcoxonMethod};

fn against_zero(d: &[f64]) -> atlasmass::stats::WilcoxonOutcome {
    wilcoxon_signed_rank(d, &vec![0.0; d.len()]).unwrap()
}

#[test]
fn exact_reference_values() {
    let o = against_zero(&[1.5, -0.3, 2.2, 0.9, -1.1, 3.4, 0.2, 1.7]);
    assert_eq!(o.method, WilcoxonMethod::Exact);
    assert_eq!(o.w_statistic, 6.0);
    assert!((o.p_two_sided - 0.109375).abs() < 1e-15);

    let o = against_zero(&[0.31, -1.2, 2.05, 0.77, 1.9, -0.45, 2.6, 1.15, -0.08, 0.52, 1.43, 3.3]);
    assert_eq!(o.w_statistic, 11.0);
    assert!((o.p_two_sided - 0.02685546875).abs() < 1e-15);
}

#[test]
fn normal_approximation_reference_values() {
    let d: Vec<f64> = (0..30).map(|i| (((i * 37) % 23) as f64 - 8.0) * 0.25 + 0.1 * i as f64).collect();
    let o = against_zero(&d);
    assert_eq!(o.method, WilcoxonMethod::NormalApprox);
    assert_eq!(o.w_statistic, 34.0);
    assert!((o.p_two_sided / 4.6504969773363745e-05 - 1.0).abs() < 1e-9, "{}", o.p_two_sided);

    // Ties and zeros: 35 nonzero differences.
    let d: Vec<f64> = (0..40).map(|i| ((i * 13) % 7) as f64 - 2.0).collect();
    let o = against_zero(&d);
    assert_eq!(o.n_effective, 35);
    assert_eq!(o.w_statistic, 135.0);
    assert!((o.p_two_sided / 0.0029889783275815515 - 1.0).abs() < 1e-9, "{}", o.p_two_sided);
}

#[test]
fn twenty_five_is_the_last_exact_size() {
    let d: Vec<f64> = (1..=26).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
    assert_eq!(against_zero(&d[..25]).method, WilcoxonMethod::Exact);
    assert_eq!(against_zero(&d).method, WilcoxonMethod::NormalApprox);
    let p = against_zero(&d[..20]).p_two_sided;
    assert!((p - common::wilcoxon_enumerated(&d[..20])).abs() < 1e-12);
}

#[test]
fn degenerate_and_invalid_inputs() {
    let o = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
    assert!(o.degenerate);
    assert_eq!(o.p_two_sided, 1.0);
    assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
    assert!(wilcoxon_signed_rank(&[], &[]).is_err());
    assert!(wilcoxon_signed_rank(&[f64::NAN], &[0.0]).is_err());
    let single = against_zero(&[3.0]);
    assert_eq!(single.p_two_sided, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn swapping_samples_keeps_p(a in prop::collection::vec(-20i32..20, 1..40), b in prop::collection::vec(-20i32..20, 40)) {
        let a: Vec<f64> = a.iter().map(|&v| v as f64 * 0.5).collect();
        let b: Vec<f64> = b[..a.len()].iter().map(|&v| v as f64 * 0.5).collect();
        let ab = wilcoxon_signed_rank(&a, &b).unwrap();
        let ba = wilcoxon_signed_rank(&b, &a).unwrap();
        prop_assert_eq!(ab.p_two_sided, ba.p_two_sided);
        prop_assert_eq!(ab.w_plus, ba.w_minus);
        prop_assert_eq!(ab.w_statistic, ba.w_statistic);
    }

    #[test]
    fn common_shift_does_not_matter(d in prop::collection::vec(-50i32..50, 1..40), shift in -1000i32..1000) {
        let a: Vec<f64> = d.iter().map(|&v| v as f64 + shift as f64).collect();
        let b = vec![shift as f64; d.len()];
        let direct: Vec<f64> = d.iter().map(|&v| v as f64).collect();
        prop_assert_eq!(
            wilcoxon_signed_rank(&a, &b).unwrap(),
            wilcoxon_signed_rank(&direct, &vec![0.0; d.len()]).unwrap()
        );
    }

    #[test]
    fn exact_branch_matches_enumeration(d in prop::collection::vec(-8i32..8, 1..14)) {
        let diffs: Vec<f64> = d.iter().map(|&v| v as f64 * 0.25).collect();
        let o = against_zero(&diffs);
        prop_assert!((o.p_two_sided - common::wilcoxon_enumerated(&diffs)).abs() <= 1e-12);
        prop_assert!(o.p_two_sided > 0.0 && o.p_two_sided <= 1.0);
    }
}
