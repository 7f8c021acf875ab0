use super::{Outcome, Tabular};
use crate::error::{Error, Result};

pub const WOODS: usize = 0;
pub const RIVER: usize = 1;
pub const FISH: usize = 0;
pub const WOOD: usize = 1;

/// Two locations. Fishing at the river catches a fish (reward `(1, 0)`)
/// with probability `p_fish`; chopping in the woods yields wood (`(0, 1)`)
/// with probability `p_wood`. The "other" action walks to the other
/// location. The episode starts in the woods and only the horizon ends it.
#[derive(Clone, Debug)]
pub struct Fishwood {
    pub p_fish: f64,
    pub p_wood: f64,
}

impl Fishwood {
    pub fn new(p_fish: f64, p_wood: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_fish) || !(0.0..=1.0).contains(&p_wood) {
            return Err(Error::InvalidArgument("fishwood probabilities must be in [0, 1]".into()));
        }
        Ok(Self { p_fish, p_wood })
    }

    /// Expected discounted return of the stationary deterministic policy
    /// `(action in woods, action at river)`, in closed form.
    pub fn stationary_value(&self, woods_action: usize, river_action: usize, gamma: f64, horizon: usize) -> Vec<f64> {
        // Σ_{k=from}^{horizon-1} γ^k
        let geo = |from: usize| -> f64 {
            if from >= horizon {
                return 0.0;
            }
            let n = (horizon - from) as i32;
            if gamma == 1.0 {
                n as f64
            } else {
                gamma.powi(from as i32) * (1.0 - gamma.powi(n)) / (1.0 - gamma)
            }
        };
        match (woods_action, river_action) {
            (WOOD, _) => vec![0.0, self.p_wood * geo(0)],
            (FISH, FISH) => vec![self.p_fish * geo(1), 0.0],
            _ => vec![0.0, 0.0],
        }
    }
}

impl Tabular for Fishwood {
    fn n_states(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn start(&self) -> usize {
        WOODS
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome> {
        let stay = |p: f64, reward: Vec<f64>| {
            vec![
                Outcome { prob: p, next: s, reward, terminal: false },
                Outcome { prob: 1.0 - p, next: s, reward: vec![0.0, 0.0], terminal: false },
            ]
        };
        match (s, a) {
            (RIVER, FISH) => stay(self.p_fish, vec![1.0, 0.0]),
            (WOODS, WOOD) => stay(self.p_wood, vec![0.0, 1.0]),
            _ => vec![Outcome { prob: 1.0, next: 1 - s, reward: vec![0.0, 0.0], terminal: false }],
        }
    }
}
