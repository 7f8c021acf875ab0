use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `a` dominates `b`: no worse in every objective, strictly better in one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// A set of mutually nondominated return vectors of a common dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    points: Vec<Vec<f64>>,
    m: usize,
}

impl ParetoFront {
    pub fn empty(m: usize) -> Self {
        Self { points: Vec::new(), m }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Set equality up to `tol` per coordinate.
    pub fn approx_eq(&self, other: &ParetoFront, tol: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
        self.len() == other.len()
            && self.points.iter().all(|p| other.points.iter().any(|q| close(p, q)))
            && other.points.iter().all(|p| self.points.iter().any(|q| close(p, q)))
    }

    /// Whether every point of `other` has a counterpart in `self` within `tol`.
    pub fn covers(&self, other: &ParetoFront, tol: f64) -> bool {
        other.points.iter().all(|q| {
            self.points
                .iter()
                .any(|p| p.iter().zip(q).all(|(x, y)| (x - y).abs() <= tol))
        })
    }
}

/// Maximal nondominated subset with exact duplicates collapsed. Output order
/// is lexicographic descending, so the result does not depend on input order.
pub fn nondominated(points: &[Vec<f64>]) -> Result<ParetoFront> {
    let Some(first) = points.first() else {
        return Ok(ParetoFront::empty(0));
    };
    let m = first.len();
    if m == 0 {
        return Err(Error::InvalidArgument("points must have at least one objective".into()));
    }
    for p in points {
        if p.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: p.len() });
        }
        if p.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite("pareto input".into()));
        }
    }
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    // Lexicographic descending: a point can only be dominated by one sorted before it.
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("NaN rejected above"));
    sorted.dedup();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in sorted {
        if !kept.iter().any(|q| dominates(q, p)) {
            kept.push(p.clone());
        }
    }
    Ok(ParetoFront { points: kept, m })
}
