use super::pareto::ParetoFront;
use crate::error::{Error, Result};
use crate::rng::keyed_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest objective count handled by the exact dimension sweep.
pub const EXACT_MAX_DIM: usize = 4;
pub const MC_DEFAULT_SAMPLES: usize = 1_000_000;
pub const MC_DEFAULT_SEED: u64 = 0x4856;

const Z99: f64 = 2.575_829_303_548_901;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvEstimate {
    pub value: f64,
    /// Half-width of the 99% confidence interval; zero for exact values.
    pub ci99: f64,
    pub exact: bool,
}

/// Hypervolume of `front` with respect to `reference` (maximization).
///
/// Exact for up to [`EXACT_MAX_DIM`] objectives, otherwise a fixed-seed
/// Monte-Carlo estimate with [`MC_DEFAULT_SAMPLES`] samples.
pub fn hypervolume(front: &ParetoFront, reference: &[f64]) -> Result<HvEstimate> {
    let pts = front.points();
    if pts.is_empty() {
        return Ok(HvEstimate { value: 0.0, ci99: 0.0, exact: true });
    }
    if reference.len() <= EXACT_MAX_DIM {
        Ok(HvEstimate { value: hypervolume_exact(pts, reference)?, ci99: 0.0, exact: true })
    } else {
        hypervolume_monte_carlo(pts, reference, MC_DEFAULT_SAMPLES, MC_DEFAULT_SEED)
    }
}

fn clip(points: &[Vec<f64>], reference: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = reference.len();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: p.len() });
        }
        // Points that do not strictly dominate the reference contribute nothing.
        if p.iter().zip(reference).all(|(x, r)| x > r) {
            out.push(p.iter().zip(reference).map(|(x, r)| x - r).collect());
        }
    }
    Ok(out)
}

/// Exact Lebesgue measure of the union of boxes `[reference, p]` by
/// recursive dimension sweep. Accepts dominated points. Works for any `m`,
/// but costs O(n^(m-1) log n).
pub fn hypervolume_exact(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("reference point is empty".into()));
    }
    let mut pts = clip(points, reference)?;
    Ok(sweep(&mut pts, reference.len()))
}

// Points are translated so the reference is the origin; only the first `d`
// coordinates are live.
fn sweep(pts: &mut [Vec<f64>], d: usize) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    if d == 1 {
        return pts.iter().map(|p| p[0]).fold(0.0, f64::max);
    }
    let k = d - 1;
    pts.sort_by(|a, b| b[k].partial_cmp(&a[k]).unwrap());
    if d == 2 {
        let mut area = 0.0;
        let mut best_x = 0.0f64;
        for i in 0..pts.len() {
            best_x = best_x.max(pts[i][0]);
            let lower = if i + 1 < pts.len() { pts[i + 1][1] } else { 0.0 };
            area += best_x * (pts[i][1] - lower);
        }
        return area;
    }
    let mut vol = 0.0;
    for i in 0..pts.len() {
        let lower = if i + 1 < pts.len() { pts[i + 1][k] } else { 0.0 };
        let h = pts[i][k] - lower;
        if h > 0.0 {
            let mut slab: Vec<Vec<f64>> = pts[..=i].to_vec();
            vol += sweep(&mut slab, k) * h;
        }
    }
    vol
}

/// Monte-Carlo hypervolume by union-of-boxes sampling: pick a box with
/// probability proportional to its volume, draw a uniform point in it and
/// score `1 / (number of boxes containing the point)`. The estimate
/// `sum(volumes) * mean(score)` is unbiased and, unlike hit-or-miss sampling
/// of the bounding box, its relative error does not grow when the union
/// fills a small part of that box. Reports a normal-approximation 99%
/// confidence half-width.
pub fn hypervolume_monte_carlo(
    points: &[Vec<f64>],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> Result<HvEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte-Carlo hypervolume needs samples > 0".into()));
    }
    let pts = clip(points, reference)?;
    if pts.is_empty() {
        return Ok(HvEstimate { value: 0.0, ci99: 0.0, exact: false });
    }
    let mut cum = Vec::with_capacity(pts.len());
    let mut total = 0.0;
    for p in &pts {
        total += p.iter().product::<f64>();
        cum.push(total);
    }
    let mut rng = keyed_rng(seed, "metrics/hv-mc");
    let mut x = vec![0.0; reference.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let u = rng.random::<f64>() * total;
        let i = cum.partition_point(|c| *c <= u).min(pts.len() - 1);
        for (x, hi) in x.iter_mut().zip(&pts[i]) {
            *x = rng.random::<f64>() * hi;
        }
        let covering = pts.iter().filter(|p| p.iter().zip(&x).all(|(a, b)| a >= b)).count();
        let score = 1.0 / covering as f64;
        sum += score;
        sum_sq += score * score;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(HvEstimate { value: total * mean, ci99: Z99 * total * (var / n).sqrt(), exact: false })
}
