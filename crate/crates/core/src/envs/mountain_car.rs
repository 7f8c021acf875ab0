use crate::error::{Error, Result};
use crate::rng::keyed_rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Classic mountain-car constants; `dt` scales the explicit Euler update
/// (`dt = 1` is the textbook discretization).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountainCarParams {
    pub dt: f64,
    pub force: f64,
    pub gravity: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub start_low: f64,
    pub start_high: f64,
}

/// Objectives: time penalty, reverse-push penalty, forward-push penalty.
/// Actions: 0 push left, 1 coast, 2 push right.
#[derive(Clone, Debug)]
pub struct MountainCar {
    p: MountainCarParams,
}

impl MountainCar {
    pub fn new(p: MountainCarParams) -> Result<Self> {
        if p.dt <= 0.0 || p.min_position >= p.max_position || p.start_low > p.start_high {
            return Err(Error::InvalidArgument("inconsistent mountain car parameters".into()));
        }
        Ok(Self { p })
    }

    pub fn initial(&self, seed: u64) -> Vec<f64> {
        let mut rng = keyed_rng(seed, "env/mountain-car/reset");
        vec![rng.random_range(self.p.start_low..=self.p.start_high), 0.0]
    }

    pub fn step(&self, x: &[f64], action: usize) -> (Vec<f64>, Vec<f64>, bool) {
        let p = &self.p;
        let (mut pos, mut vel) = (x[0], x[1]);
        let push = action as f64 - 1.0;
        vel += p.dt * (push * p.force - (3.0 * pos).cos() * p.gravity);
        vel = vel.clamp(-p.max_speed, p.max_speed);
        pos += p.dt * vel;
        pos = pos.clamp(p.min_position, p.max_position);
        if pos == p.min_position && vel < 0.0 {
            vel = 0.0;
        }
        let reward = vec![-1.0, if action == 0 { -1.0 } else { 0.0 }, if action == 2 { -1.0 } else { 0.0 }];
        (vec![pos, vel], reward, pos >= p.goal_position)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mid = 0.5 * (self.p.min_position + self.p.max_position);
        let half = 0.5 * (self.p.max_position - self.p.min_position);
        vec![(x[0] - mid) / half, x[1] / self.p.max_speed]
    }

    /// Per-step lower bound of each objective.
    pub fn reward_floor(&self) -> Vec<f64> {
        vec![-1.0, -1.0, -1.0]
    }
}
