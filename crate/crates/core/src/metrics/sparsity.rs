use super::pareto::ParetoFront;

/// Squared-gap sparsity: for each objective, sort the front by that objective
/// and sum squared consecutive gaps; normalize by `|P| - 1`. Lower is better.
pub fn sparsity(front: &ParetoFront) -> f64 {
    let pts = front.points();
    if pts.len() <= 1 {
        return 0.0;
    }
    let m = pts[0].len();
    let mut total = 0.0;
    let mut col = Vec::with_capacity(pts.len());
    for j in 0..m {
        col.clear();
        col.extend(pts.iter().map(|p| p[j]));
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        total += col.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
    }
    total / (pts.len() - 1) as f64
}
