//! Multiobjective MDPs: four tabular environments with exact Pareto-front
//! oracles and two continuous-state ones.
//!
//! Every environment is a value type. Dynamics are functional: `step` takes
//! the current [`State`] and returns the next, so clones never share state.

mod config;
mod deep_sea_treasure;
mod fishwood;
mod fruit_tree;
mod mountain_car;
pub mod oracle;
mod reservoir;
mod resource_gathering;

pub use config::{builtin_ids, Dynamics, EnvConfig, ENV_SCHEMA_VERSION};
pub use fruit_tree::generate_leaves;
pub use oracle::{enumerate_pareto_front, enumerate_sequences_front, worst_case_returns};
pub use fishwood::{FISH, RIVER, WOOD, WOODS};

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Finite(usize),
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Width of a policy's raw output for this space.
    pub fn output_width(&self) -> usize {
        match self {
            ActionSpace::Finite(n) => *n,
            ActionSpace::Box { low, .. } => low.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub kind: EnvKind,
    /// Objective count.
    pub m: usize,
    pub gamma: f64,
    pub horizon: usize,
    pub reference_point: Vec<f64>,
    pub action_space: ActionSpace,
    /// Observation width for continuous environments.
    pub state_dim: usize,
    /// Number of tabular states for discrete environments.
    pub state_count: Option<usize>,
    /// Typical return magnitude per objective, used to normalize conditioning inputs.
    pub return_scale: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Index(usize),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub obs: Observation,
    /// Steps taken so far in the episode.
    pub t: usize,
    pub done: bool,
}

impl State {
    pub fn index(&self) -> Option<usize> {
        match self.obs {
            Observation::Index(i) => Some(i),
            Observation::Vector(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Index(usize),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionResult {
    pub next_state: State,
    pub reward: Vec<f64>,
    pub done: bool,
}

/// One possible result of a tabular transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub next: usize,
    pub reward: Vec<f64>,
    pub terminal: bool,
}

/// Exact model of a finite MOMDP.
pub trait Tabular {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn start(&self) -> usize;
    /// States from which no action is available (fruit-tree leaves).
    fn is_terminal(&self, _s: usize) -> bool {
        false
    }
    /// Outcome distribution of taking `a` in the non-terminal state `s`.
    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome>;
}

#[derive(Clone, Debug)]
enum Model {
    DeepSeaTreasure(deep_sea_treasure::DeepSeaTreasure),
    FruitTree(fruit_tree::FruitTree),
    Fishwood(fishwood::Fishwood),
    ResourceGathering(resource_gathering::ResourceGathering),
    MountainCar(mountain_car::MountainCar),
    Reservoir(reservoir::LinearReservoir),
}

#[derive(Clone, Debug)]
pub struct Env {
    spec: EnvSpec,
    model: Model,
}

impl Env {
    pub fn from_config(cfg: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let (model, kind, action_space, state_dim, state_count, m) = match &cfg.dynamics {
            Dynamics::DeepSeaTreasure { grid } => {
                let d = deep_sea_treasure::DeepSeaTreasure::new(grid.clone())?;
                let n = d.n_states();
                (Model::DeepSeaTreasure(d), EnvKind::Discrete, ActionSpace::Finite(4), 2, Some(n), 2)
            }
            Dynamics::FruitTree { depth, leaves, .. } => {
                let f = fruit_tree::FruitTree::new(*depth, leaves.clone())?;
                let (n, m) = (f.n_states(), f.objectives());
                (Model::FruitTree(f), EnvKind::Discrete, ActionSpace::Finite(2), 1, Some(n), m)
            }
            Dynamics::Fishwood { p_fish, p_wood } => {
                let f = fishwood::Fishwood::new(*p_fish, *p_wood)?;
                (Model::Fishwood(f), EnvKind::Discrete, ActionSpace::Finite(2), 1, Some(2), 2)
            }
            Dynamics::ResourceGathering { map, attack_prob } => {
                let r = resource_gathering::ResourceGathering::new(map, *attack_prob)?;
                let n = r.n_states();
                (Model::ResourceGathering(r), EnvKind::Discrete, ActionSpace::Finite(4), 3, Some(n), 3)
            }
            Dynamics::MountainCar(p) => {
                (Model::MountainCar(mountain_car::MountainCar::new(p.clone())?), EnvKind::Continuous, ActionSpace::Finite(3), 2, None, 3)
            }
            Dynamics::LinearReservoir(p) => {
                let r = reservoir::LinearReservoir::new(p.clone())?;
                let space = ActionSpace::Box { low: vec![0.0], high: vec![p.max_release] };
                (Model::Reservoir(r), EnvKind::Continuous, space, 1, None, 2)
            }
        };
        if cfg.reference_point.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: cfg.reference_point.len() });
        }
        if cfg.return_scale.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: cfg.return_scale.len() });
        }
        let spec = EnvSpec {
            id: cfg.id.clone(),
            kind,
            m,
            gamma: cfg.gamma,
            horizon: cfg.horizon,
            reference_point: cfg.reference_point.clone(),
            action_space,
            state_dim,
            state_count,
            return_scale: cfg.return_scale.clone(),
        };
        Ok(Self { spec, model })
    }

    /// One of the environments shipped with the crate, by id.
    pub fn builtin(id: &str) -> Result<Self> {
        Self::from_config(&EnvConfig::builtin(id)?)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_config(&EnvConfig::load(path)?)
    }

    /// A builtin id or a path to a JSON environment config.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        Self::from_config(&EnvConfig::resolve(id_or_path)?)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    /// Same dynamics with a different episode horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut e = self.clone();
        e.spec.horizon = horizon.max(1);
        e
    }

    pub fn tabular(&self) -> Option<&dyn Tabular> {
        match &self.model {
            Model::DeepSeaTreasure(d) => Some(d),
            Model::FruitTree(f) => Some(f),
            Model::Fishwood(f) => Some(f),
            Model::ResourceGathering(r) => Some(r),
            Model::MountainCar(_) | Model::Reservoir(_) => None,
        }
    }

    pub(crate) fn fishwood(&self) -> Option<&fishwood::Fishwood> {
        match &self.model {
            Model::Fishwood(f) => Some(f),
            _ => None,
        }
    }

    /// Initial state; continuous environments draw it from a stream keyed by `seed`.
    pub fn reset(&self, seed: u64) -> State {
        let obs = match &self.model {
            Model::MountainCar(mc) => Observation::Vector(mc.initial(seed)),
            Model::Reservoir(r) => Observation::Vector(r.initial(seed)),
            _ => Observation::Index(self.tabular().expect("tabular").start()),
        };
        State { obs, t: 0, done: false }
    }

    pub fn step(&self, state: &State, action: &Action, rng: &mut Rng) -> Result<TransitionResult> {
        if state.done {
            return Err(Error::StepAfterDone);
        }
        let (obs, reward, terminal) = match (&self.model, &state.obs, action) {
            (Model::MountainCar(mc), Observation::Vector(x), Action::Index(a)) => {
                if *a >= 3 {
                    return Err(self.bad_action(format!("action {a} out of range 0..3")));
                }
                let (next, r, done) = mc.step(x, *a);
                (Observation::Vector(next), r, done)
            }
            (Model::Reservoir(res), Observation::Vector(x), Action::Vector(u)) => {
                if u.len() != 1 || !u[0].is_finite() {
                    return Err(self.bad_action("release must be one finite number".into()));
                }
                let (next, r) = res.step(x, u[0], rng);
                (Observation::Vector(next), r, false)
            }
            (_, Observation::Index(s), Action::Index(a)) => {
                let tab = self.tabular().ok_or_else(|| self.bad_action("index action".into()))?;
                if *a >= tab.n_actions() {
                    return Err(self.bad_action(format!("action {a} out of range 0..{}", tab.n_actions())));
                }
                let outcomes = tab.outcomes(*s, *a);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = outcomes.last().expect("at least one outcome");
                for o in &outcomes {
                    acc += o.prob;
                    if u < acc {
                        chosen = o;
                        break;
                    }
                }
                (Observation::Index(chosen.next), chosen.reward.clone(), chosen.terminal)
            }
            _ => return Err(self.bad_action(format!("{action:?} does not match state {:?}", state.obs))),
        };
        let t = state.t + 1;
        let done = terminal || t >= self.spec.horizon;
        Ok(TransitionResult { next_state: State { obs, t, done }, reward, done })
    }

    fn bad_action(&self, reason: String) -> Error {
        Error::InvalidAction { env: self.spec.id.clone(), reason }
    }

    /// Network input encoding of a state: one-hot for tabular environments,
    /// a normalized vector otherwise.
    pub fn features(&self, state: &State) -> Vec<f64> {
        match (&self.model, &state.obs) {
            (Model::MountainCar(mc), Observation::Vector(x)) => mc.normalize(x),
            (Model::Reservoir(r), Observation::Vector(x)) => r.normalize(x),
            (_, Observation::Index(i)) => {
                let mut v = vec![0.0; self.spec.state_count.unwrap_or(0)];
                v[*i] = 1.0;
                v
            }
            _ => unreachable!("observation kind matches environment kind"),
        }
    }

    /// Per-step lower bound of each reward component (continuous envs).
    pub(crate) fn reward_floor(&self) -> Vec<f64> {
        match &self.model {
            Model::MountainCar(mc) => mc.reward_floor(),
            Model::Reservoir(r) => r.reward_floor(),
            _ => unreachable!("tabular envs use the exact oracle"),
        }
    }

    pub fn feature_width(&self) -> usize {
        self.spec.state_count.unwrap_or(self.spec.state_dim)
    }

    /// Discounted return of a reward sequence.
    pub fn discounted_return(&self, rewards: &[Vec<f64>]) -> Vec<f64> {
        discounted_return(rewards, self.spec.gamma, self.spec.m)
    }
}

pub fn discounted_return(rewards: &[Vec<f64>], gamma: f64, m: usize) -> Vec<f64> {
    let mut g = vec![0.0; m];
    let mut disc = 1.0;
    for r in rewards {
        for (gi, ri) in g.iter_mut().zip(r) {
            *gi += disc * ri;
        }
        disc *= gamma;
    }
    g
}
