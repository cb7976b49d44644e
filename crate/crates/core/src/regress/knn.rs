use super::Weighting;

fn distance(a: &[f64], b: &[f64], p: u32) -> f64 {
    match p {
        1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        _ => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs().powi(p as i32))
            .sum::<f64>()
            .powf(1.0 / p as f64),
    }
}

/// Prediction for one standardized query. Neighbors are ordered by
/// distance, ties by training index. With distance weighting, exact
/// matches among the neighbors take all the weight.
pub(super) fn predict_one(
    rows: &[Vec<f64>],
    targets: &[f64],
    query: &[f64],
    k: usize,
    weighting: Weighting,
    p: u32,
) -> f64 {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (distance(r, query, p), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nn = &d[..k.min(d.len())];
    match weighting {
        Weighting::Uniform => nn.iter().map(|&(_, i)| targets[i]).sum::<f64>() / nn.len() as f64,
        Weighting::Distance => {
            let exact: Vec<f64> = nn.iter().filter(|e| e.0 == 0.0).map(|&(_, i)| targets[i]).collect();
            if !exact.is_empty() {
                return exact.iter().sum::<f64>() / exact.len() as f64;
            }
            let (num, den) = nn
                .iter()
                .fold((0.0, 0.0), |(s, w), &(dist, i)| (s + targets[i] / dist, w + 1.0 / dist));
            num / den
        }
    }
}
