//! Signed-rank comparison of two prediction sets' squared residuals, in
//! the exact and the normal-approximation regime.
//!
//! cargo run --example wilcoxon

use atlasmass::stats::wilcoxon_signed_rank;

fn main() -> atlasmass::Result<()> {
    let truth = [812.0, 790.5, 845.2, 801.7, 779.9, 830.3, 795.0, 820.8, 808.1, 788.6];
    let a = [815.1, 786.0, 850.9, 799.2, 781.5, 826.0, 798.2, 823.5, 806.0, 791.9];
    let b = [820.4, 781.2, 838.0, 809.9, 772.1, 839.6, 801.1, 829.9, 800.4, 781.0];
    let sq = |p: &[f64]| -> Vec<f64> { p.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).collect() };
    let o = wilcoxon_signed_rank(&sq(&a), &sq(&b))?;
    println!("n={} W+={} W-={} p={:.5} ({:?})", o.n_effective, o.w_plus, o.w_minus, o.p_two_sided, o.method);

    // Forty paired residuals: beyond the exact range.
    let x: Vec<f64> = (0..40).map(|i| ((i * 17) % 11) as f64).collect();
    let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 13) as f64 + 1.0).collect();
    let o = wilcoxon_signed_rank(&x, &y)?;
    println!("n={} W={} p={:.5} ({:?})", o.n_effective, o.w_statistic, o.p_two_sided, o.method);
    Ok(())
}
