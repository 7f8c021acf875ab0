//! Pareto-front quality indicators and the significance test used to compare
//! methods across seeds.

mod eum;
mod hypervolume;
mod pareto;
mod ranksum;
mod sparsity;

pub use eum::{eum, simplex_grid, WeightSet};
pub use hypervolume::{
    hypervolume, hypervolume_exact, hypervolume_monte_carlo, HvEstimate, EXACT_MAX_DIM,
    MC_DEFAULT_SAMPLES, MC_DEFAULT_SEED,
};
pub use pareto::{dominates, nondominated, ParetoFront};
pub use ranksum::{rank_sum_test, RankSumResult, EXACT_MAX_N};
pub use sparsity::sparsity;

use serde::{Deserialize, Serialize};

/// One evaluated front, as persisted by the experiment harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub env: String,
    pub method: String,
    pub seed: u64,
    pub hv: f64,
    pub sparsity: f64,
    pub eum: f64,
    pub n_front_points: usize,
}
