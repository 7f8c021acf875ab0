use super::{Outcome, Tabular};
use crate::error::{Error, Result};
use crate::rng::keyed_rng;
use rand_distr::{Distribution, StandardNormal};

/// Complete binary tree of the given depth; node `i` has children `2i+1`
/// (action 0) and `2i+2` (action 1). Reaching a leaf yields its nutrient
/// vector and ends the episode.
#[derive(Clone, Debug)]
pub struct FruitTree {
    depth: usize,
    leaves: Vec<Vec<f64>>,
}

impl FruitTree {
    pub fn new(depth: usize, leaves: Vec<Vec<f64>>) -> Result<Self> {
        if depth == 0 || depth > 12 {
            return Err(Error::InvalidArgument(format!("fruit tree depth {depth} out of range 1..=12")));
        }
        if leaves.len() != 1 << depth {
            return Err(Error::InvalidArgument(format!("depth {depth} needs {} leaves, got {}", 1 << depth, leaves.len())));
        }
        let m = leaves[0].len();
        if m == 0 || leaves.iter().any(|l| l.len() != m) {
            return Err(Error::InvalidArgument("fruit tree leaves must share a nonzero width".into()));
        }
        Ok(Self { depth, leaves })
    }

    pub fn objectives(&self) -> usize {
        self.leaves[0].len()
    }

    fn first_leaf(&self) -> usize {
        (1 << self.depth) - 1
    }
}

impl Tabular for FruitTree {
    fn n_states(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn start(&self) -> usize {
        0
    }

    fn is_terminal(&self, s: usize) -> bool {
        s >= self.first_leaf()
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome> {
        let next = 2 * s + 1 + a.min(1);
        let (reward, terminal) = if next >= self.first_leaf() {
            (self.leaves[next - self.first_leaf()].clone(), true)
        } else {
            (vec![0.0; self.objectives()], false)
        };
        vec![Outcome { prob: 1.0, next, reward, terminal }]
    }
}

/// Leaf nutrient vectors for a tree of `depth`, drawn from the stream named
/// `seed_name`: absolute Gaussian directions scaled to norm 10 and rounded to
/// two decimals. Points on a sphere cannot dominate each other, so (up to
/// rounding) every leaf is Pareto optimal.
pub fn generate_leaves(depth: usize, objectives: usize, seed_name: &str) -> Vec<Vec<f64>> {
    let mut rng = keyed_rng(0, seed_name);
    (0..1usize << depth)
        .map(|_| {
            let v: Vec<f64> = (0..objectives).map(|_| StandardNormal.sample(&mut rng)).map(|x: f64| x.abs()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| (x / norm * 1000.0).round() / 100.0).collect()
        })
        .collect()
}
