use crate::envs::{discounted_return, Action, Observation};
use crate::metrics::dominates;
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: Vec<f64>,
}

/// One recorded episode with its achieved discounted return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub transitions: Vec<Transition>,
    pub achieved: Vec<f64>,
    pub horizon: usize,
    #[serde(skip)]
    to_go: Vec<Vec<f64>>,
}

impl ReplayEntry {
    pub fn new(transitions: Vec<Transition>, gamma: f64, m: usize) -> Self {
        // to_go[t] = r_t + γ to_go[t+1]
        let mut to_go = vec![vec![0.0; m]; transitions.len()];
        let mut acc = vec![0.0; m];
        for (t, tr) in transitions.iter().enumerate().rev() {
            for i in 0..m {
                acc[i] = tr.reward[i] + gamma * acc[i];
            }
            to_go[t] = acc.clone();
        }
        let rewards: Vec<Vec<f64>> = transitions.iter().map(|t| t.reward.clone()).collect();
        let achieved = discounted_return(&rewards, gamma, m);
        Self { horizon: transitions.len(), transitions, achieved, to_go }
    }

    /// Discounted return collected from step `t` to the end of the episode.
    pub fn return_to_go(&self, t: usize) -> &[f64] {
        &self.to_go[t]
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Bounded episode buffer. When over capacity it keeps the episodes closest
/// to the current nondominated set, evicting repeated copies of the same
/// return first.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer {
    entries: Vec<ReplayEntry>,
    capacity: usize,
    front: Vec<usize>,
}

/// Copies of one return beyond this many count as crowding.
const MAX_DUPLICATES: usize = 10;

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { entries: Vec::new(), capacity: capacity.max(1), front: Vec::new() }
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: ReplayEntry) {
        self.entries.push(entry);
    }

    /// Indices of entries whose returns form the nondominated set, one per
    /// distinct return (the most recent copy).
    pub fn front(&self) -> &[usize] {
        &self.front
    }

    pub fn front_returns(&self) -> Vec<Vec<f64>> {
        self.front.iter().map(|&i| self.entries[i].achieved.clone()).collect()
    }

    /// Evicts down to capacity and recomputes the nondominated set.
    /// `scale` normalizes objectives for the distance ranking.
    pub fn refresh(&mut self, scale: &[f64]) {
        if self.entries.len() > self.capacity {
            self.recompute_front();
            let scaled = |v: &[f64]| -> Vec<f64> { v.iter().zip(scale).map(|(x, s)| x / s).collect() };
            let front_pts: Vec<Vec<f64>> = self.front.iter().map(|&i| scaled(&self.entries[i].achieved)).collect();
            let n = self.entries.len();
            let mut copies: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut score = vec![0.0; n];
            // newest first so the most recent copies survive
            for i in (0..n).rev() {
                let p = scaled(&self.entries[i].achieved);
                let dist = front_pts
                    .iter()
                    .map(|q| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                let key: Vec<u64> = self.entries[i].achieved.iter().map(|x| x.to_bits()).collect();
                let count = copies.entry(key).or_insert(0);
                let rank = *count;
                *count += 1;
                score[i] = dist + if rank >= MAX_DUPLICATES { 1.0 } else { 0.0 };
            }
            let mut order: Vec<usize> = (0..n).collect();
            // stable: among equal scores, newer entries (higher index) win
            order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)));
            let mut keep = order[..self.capacity].to_vec();
            keep.sort_unstable();
            let old = std::mem::take(&mut self.entries);
            let mut old: Vec<Option<ReplayEntry>> = old.into_iter().map(Some).collect();
            self.entries = keep.into_iter().map(|i| old[i].take().expect("kept once")).collect();
        }
        self.recompute_front();
    }

    fn recompute_front(&mut self) {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        // lexicographically descending returns, newest copy first among equals;
        // a point can only be dominated by one sorted before it
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&self.entries[a].achieved, &self.entries[b].achieved);
            pb.partial_cmp(pa).expect("finite returns").then(b.cmp(&a))
        });
        let mut front: Vec<usize> = Vec::new();
        for i in order {
            let p = &self.entries[i].achieved;
            let covered = front.iter().any(|&j| {
                let q = &self.entries[j].achieved;
                q == p || dominates(q, p)
            });
            if !covered {
                front.push(i);
            }
        }
        front.sort_unstable();
        self.front = front;
    }

    /// A nondominated return chosen uniformly, with uniform noise in
    /// `[0, noise_frac * range]` added to one random objective, and the
    /// horizon of the episode that achieved it.
    pub fn select_desired_return(&self, noise_frac: f64, rng: &mut Rng) -> (Vec<f64>, usize) {
        assert!(!self.front.is_empty(), "select_desired_return on an empty buffer");
        let pick = &self.entries[self.front[rng.random_range(0..self.front.len())]];
        let mut desired = pick.achieved.clone();
        let m = desired.len();
        let pool: Vec<&ReplayEntry> = if self.front.len() > 1 {
            self.front.iter().map(|&i| &self.entries[i]).collect()
        } else {
            self.entries.iter().collect()
        };
        let i = rng.random_range(0..m);
        let (lo, hi) = pool
            .iter()
            .map(|e| e.achieved[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let delta = noise_frac * (hi - lo);
        if delta > 0.0 {
            desired[i] += rng.random_range(0.0..delta);
        }
        (desired, pick.horizon)
    }
}
