use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservoirParams {
    pub capacity: f64,
    pub flood_level: f64,
    pub demand: f64,
    pub inflow_mean: f64,
    pub inflow_std: f64,
    pub max_release: f64,
    pub initial_low: f64,
    pub initial_high: f64,
}

/// Single reservoir with linear storage dynamics
/// `s' = s + inflow - release`. Objectives: storage above the flood level
/// (penalized linearly) and unmet downstream demand.
#[derive(Clone, Debug)]
pub struct LinearReservoir {
    p: ReservoirParams,
}

impl LinearReservoir {
    pub fn new(p: ReservoirParams) -> Result<Self> {
        let ok = p.capacity > 0.0
            && (0.0..=p.capacity).contains(&p.flood_level)
            && p.demand >= 0.0
            && p.inflow_std >= 0.0
            && p.max_release > 0.0
            && 0.0 <= p.initial_low
            && p.initial_low <= p.initial_high
            && p.initial_high <= p.capacity;
        if !ok {
            return Err(Error::InvalidArgument("inconsistent reservoir parameters".into()));
        }
        Ok(Self { p })
    }

    pub fn initial(&self, seed: u64) -> Vec<f64> {
        let mut rng = keyed_rng(seed, "env/reservoir/reset");
        vec![rng.random_range(self.p.initial_low..=self.p.initial_high)]
    }

    pub fn step(&self, x: &[f64], release: f64, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
        let p = &self.p;
        let noise: f64 = StandardNormal.sample(rng);
        let inflow = (p.inflow_mean + p.inflow_std * noise).max(0.0);
        let available = x[0] + inflow;
        let release = release.clamp(0.0, p.max_release.min(available));
        let next = (available - release).clamp(0.0, p.capacity);
        let flood = -(next - p.flood_level).max(0.0);
        let deficit = -(p.demand - release).max(0.0);
        (vec![next], vec![flood, deficit])
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0] / self.p.capacity - 1.0]
    }

    pub fn reward_floor(&self) -> Vec<f64> {
        vec![-(self.p.capacity - self.p.flood_level), -self.p.demand]
    }
}
