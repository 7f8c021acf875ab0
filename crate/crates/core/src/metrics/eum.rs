use super::pareto::ParetoFront;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Weight vectors on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    weights: Vec<Vec<f64>>,
}

impl WeightSet {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.first().map(|w| w.len()).unwrap_or(0);
        for w in &weights {
            if w.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: w.len() });
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("weight {w:?} is not on the simplex")));
            }
        }
        Ok(Self { weights })
    }

    /// Default grid: 101 weights for two objectives, otherwise a barycentric
    /// grid with step 0.1.
    pub fn default_for(m: usize) -> Self {
        let divisions = if m == 2 { 100 } else { 10 };
        Self { weights: simplex_grid(m, divisions) }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map(|w| w.len()).unwrap_or(0)
    }
}

/// All points of the simplex lattice `{k / divisions}` in `m` dimensions.
pub fn simplex_grid(m: usize, divisions: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, divisions: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == m - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / divisions as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(m, left - k, divisions, cur, out);
            cur.pop();
        }
    }
    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(m, divisions, divisions, &mut Vec::with_capacity(m), &mut out);
    out
}

/// Expected utility: mean over weights of the best linear scalarization
/// attained by the front.
pub fn eum(front: &ParetoFront, weights: &WeightSet) -> Result<f64> {
    let pts = front.points();
    if pts.is_empty() {
        return Err(Error::InvalidArgument("expected utility of an empty front".into()));
    }
    if weights.weights.is_empty() {
        return Err(Error::InvalidArgument("empty weight set".into()));
    }
    let m = pts[0].len();
    if weights.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: weights.dim() });
    }
    let total: f64 = weights
        .weights
        .iter()
        .map(|w| {
            pts.iter()
                .map(|p| p.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / weights.weights.len() as f64)
}
