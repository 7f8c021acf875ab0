//! Pareto-conditioned networks: a return-conditioned policy trained by
//! hindsight relabelling, used both as a baseline and as the recorder of
//! policy search sequences.

mod buffer;
mod model;

pub use buffer::{ReplayBuffer, ReplayEntry, Transition};
pub use model::{evaluate_snapshot, snapshot_policy, EncodingKind, PcnModel, PolicySnapshot, MAX_SNAPSHOT_STATES};

use crate::envs::{Action, ActionSpace, Env, State};
use crate::error::{Error, Result};
use crate::metrics::{nondominated, ParetoFront};
use crate::nn::{grad, Adam, Mat};
use crate::rng::{Rng, RngKey};
use model::unit_action;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcnConfig {
    /// Total episode budget, warm-up included.
    pub episodes: usize,
    /// A snapshot is recorded every `stride` episodes (and at episode 0).
    pub stride: usize,
    pub buffer_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub updates_per_iter: usize,
    pub episodes_per_iter: usize,
    /// Uniform-random episodes collected before training starts.
    pub warmup_episodes: usize,
    /// Exploration noise on the desired return, as a fraction of the front's range.
    pub noise_frac: f64,
    /// Rollouts averaged when evaluating on stochastic environments.
    pub eval_episodes: usize,
    /// Number of recorded sequences; each follows its own preference weights.
    pub sequences: usize,
}

impl Default for PcnConfig {
    fn default() -> Self {
        Self {
            episodes: 2_000,
            stride: 100,
            buffer_size: 10_000,
            lr: 1e-3,
            hidden: vec![64, 64],
            batch_size: 64,
            updates_per_iter: 10,
            episodes_per_iter: 10,
            warmup_episodes: 50,
            noise_frac: 0.1,
            eval_episodes: 20,
            sequences: 1,
        }
    }
}

impl PcnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes),
            ("stride", self.stride),
            ("buffer_size", self.buffer_size),
            ("batch_size", self.batch_size),
            ("episodes_per_iter", self.episodes_per_iter),
            ("sequences", self.sequences),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("pcn {name} must be positive")));
            }
        }
        if !(self.lr > 0.0) || !(self.noise_frac >= 0.0) {
            return Err(Error::InvalidArgument("pcn lr must be positive and noise_frac nonnegative".into()));
        }
        Ok(())
    }
}

/// Snapshots of one training run with the aggregate return `R_t` recorded
/// next to each: the mean of the buffer's nondominated returns at that time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSequence {
    pub env_id: String,
    pub seed: u64,
    /// Weights (over return-scaled objectives) picking which front point the
    /// snapshots are conditioned on.
    pub preference: Vec<f64>,
    pub snapshots: Vec<PolicySnapshot>,
    pub returns: Vec<Vec<f64>>,
    /// Full nondominated return set behind each `returns[t]`.
    pub fronts: Vec<Vec<Vec<f64>>>,
}

impl SearchSequence {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Sequence { id: format!("{}/{}", self.env_id, self.seed), reason };
        if self.snapshots.len() != self.returns.len() {
            return Err(bad(format!("{} snapshots vs {} returns", self.snapshots.len(), self.returns.len())));
        }
        for w in self.snapshots.windows(2) {
            if w[1].step_index <= w[0].step_index {
                return Err(bad("step indices not strictly increasing".into()));
            }
        }
        for s in &self.snapshots {
            if s.env_id != self.env_id {
                return Err(bad(format!("snapshot for {} in a {} sequence", s.env_id, self.env_id)));
            }
            s.validate().map_err(|e| bad(e.to_string()))?;
        }
        Ok(())
    }
}

pub struct PcnRun {
    pub model: PcnModel,
    pub sequences: Vec<SearchSequence>,
    pub buffer: ReplayBuffer,
}

impl PcnRun {
    /// Front reached by the final model, executed greedily on every
    /// nondominated buffer return.
    pub fn front(&self, env: &Env, eval_episodes: usize, seed: u64) -> Result<ParetoFront> {
        let mut points = Vec::new();
        for &i in self.buffer.front() {
            let e = &self.buffer.entries()[i];
            points.push(evaluate_model(&self.model, env, &e.achieved, e.horizon, eval_episodes, seed)?);
        }
        nondominated(&points)
    }
}

/// Mean return of the model conditioned on `(desired, horizon)`.
pub fn evaluate_model(model: &PcnModel, env: &Env, desired: &[f64], horizon: usize, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let episodes = if env.tabular().is_some() && is_deterministic(env) { 1 } else { episodes.max(1) };
    let mut total = vec![0.0; env.spec().m];
    for ep in 0..episodes {
        let s = seed.wrapping_add(ep as u64);
        let mut rng = crate::rng::keyed_rng(s, "policy/eval");
        let rewards: Vec<Vec<f64>> = model.rollout(env, desired, horizon, s, &mut rng, false)?.into_iter().map(|(_, _, r)| r).collect();
        for (t, g) in total.iter_mut().zip(env.discounted_return(&rewards)) {
            *t += g;
        }
    }
    Ok(total.into_iter().map(|t| t / episodes as f64).collect())
}

fn is_deterministic(env: &Env) -> bool {
    let Some(tab) = env.tabular() else { return false };
    (0..tab.n_states()).all(|s| tab.is_terminal(s) || (0..tab.n_actions()).all(|a| tab.outcomes(s, a).len() == 1))
}

/// Dirichlet(1, …, 1) draw.
fn preference(m: usize, rng: &mut Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

/// Front entry whose scaled offset from the reference point points most
/// closely along `w`. Unlike a weighted sum this reaches every front point,
/// including those inside concave or flat parts of the front.
fn preferred(buffer: &ReplayBuffer, w: &[f64], reference: &[f64], scale: &[f64]) -> Option<(Vec<f64>, usize)> {
    let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    buffer
        .front()
        .iter()
        .map(|&i| &buffer.entries()[i])
        .map(|e| {
            let d: Vec<f64> = e.achieved.iter().zip(reference).zip(scale).map(|((r, z), s)| (r - z) / s).collect();
            let dn = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            (d.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / (dn * wn), e)
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, e)| (e.achieved.clone(), e.horizon))
}

struct Recorder {
    preferences: Vec<Vec<f64>>,
    sequences: Vec<SearchSequence>,
}

impl Recorder {
    fn record(&mut self, model: &PcnModel, env: &Env, buffer: &mut ReplayBuffer, episodes_done: usize) -> Result<()> {
        let spec = env.spec();
        buffer.refresh(&spec.return_scale);
        let front = buffer.front_returns();
        let mut mean = vec![0.0; spec.m];
        for p in &front {
            for (a, x) in mean.iter_mut().zip(p) {
                *a += x / front.len() as f64;
            }
        }
        for (w, seq) in self.preferences.iter().zip(self.sequences.iter_mut()) {
            let (desired, horizon) = preferred(buffer, w, &spec.reference_point, &spec.return_scale).unwrap_or((vec![0.0; spec.m], spec.horizon));
            seq.snapshots.push(snapshot_policy(model, env, &desired, horizon, episodes_done)?);
            seq.returns.push(mean.clone());
            seq.fronts.push(front.clone());
        }
        Ok(())
    }
}

/// Trains a PCN on `env` and records `config.sequences` search sequences.
pub fn train_pcn(env: &Env, config: &PcnConfig, seed: u64) -> Result<PcnRun> {
    config.validate()?;
    let spec = env.spec().clone();
    let key = RngKey::new(seed, format!("pcn/{}", spec.id));
    let mut model = PcnModel::new(env, &config.hidden, &mut key.child("init").rng())?;
    let mut adam = Adam::new(model.net.param_count(), config.lr);
    let mut explore_rng = key.child("explore").rng();
    let mut batch_rng = key.child("batch").rng();
    let mut command_rng = key.child("command").rng();
    let mut buffer = ReplayBuffer::new(config.buffer_size);

    let preferences: Vec<Vec<f64>> =
        (0..config.sequences).map(|j| preference(spec.m, &mut key.child(&format!("preference/{j}")).rng())).collect();
    let mut recorder = Recorder {
        sequences: preferences
            .iter()
            .map(|w| SearchSequence {
                env_id: spec.id.clone(),
                seed,
                preference: w.clone(),
                snapshots: Vec::new(),
                returns: Vec::new(),
                fronts: Vec::new(),
            })
            .collect(),
        preferences,
    };
    recorder.record(&model, env, &mut buffer, 0)?;

    let episode_seed = |k: usize| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
    let mut done = 0usize;
    let finish_episode = |done: &mut usize, buffer: &mut ReplayBuffer, recorder: &mut Recorder, model: &PcnModel, steps: Vec<(State, Action, Vec<f64>)>| -> Result<()> {
        let transitions = steps.into_iter().map(|(s, a, r)| Transition { obs: s.obs, action: a, reward: r }).collect();
        buffer.push(ReplayEntry::new(transitions, spec.gamma, spec.m));
        *done += 1;
        if done.is_multiple_of(config.stride) {
            recorder.record(model, env, buffer, *done)?;
        }
        Ok(())
    };

    while done < config.warmup_episodes.min(config.episodes) {
        let steps = random_episode(env, episode_seed(done), &mut explore_rng)?;
        finish_episode(&mut done, &mut buffer, &mut recorder, &model, steps)?;
    }
    buffer.refresh(&spec.return_scale);

    while done < config.episodes {
        if !buffer.is_empty() {
            for _ in 0..config.updates_per_iter {
                train_step(&mut model, &mut adam, env, &buffer, config.batch_size, &mut batch_rng)?;
            }
        }
        let (desired, horizon) = if buffer.front().is_empty() {
            (vec![0.0; spec.m], spec.horizon)
        } else {
            buffer.select_desired_return(config.noise_frac, &mut command_rng)
        };
        for _ in 0..config.episodes_per_iter {
            if done >= config.episodes {
                break;
            }
            let steps = model.rollout(env, &desired, horizon, episode_seed(done), &mut explore_rng, true)?;
            finish_episode(&mut done, &mut buffer, &mut recorder, &model, steps)?;
        }
        buffer.refresh(&spec.return_scale);
    }
    model.net.round_to_f32();
    Ok(PcnRun { model, sequences: recorder.sequences, buffer })
}

fn random_episode(env: &Env, seed: u64, rng: &mut Rng) -> Result<Vec<(State, Action, Vec<f64>)>> {
    let mut s = env.reset(seed);
    let mut out = Vec::new();
    while !s.done {
        let a = match &env.spec().action_space {
            ActionSpace::Finite(n) => Action::Index(rng.random_range(0..*n)),
            ActionSpace::Box { low, high } => Action::Vector(low.iter().zip(high).map(|(l, h)| rng.random_range(*l..=*h)).collect()),
        };
        let tr = env.step(&s, &a, rng)?;
        out.push((s, a, tr.reward));
        s = tr.next_state;
    }
    Ok(out)
}

/// One supervised update on relabelled transitions: the command is the
/// return actually collected from that step on and the steps that remained.
fn train_step(model: &mut PcnModel, adam: &mut Adam, env: &Env, buffer: &ReplayBuffer, batch: usize, rng: &mut Rng) -> Result<()> {
    let width = model.net.input_width();
    let out_w = model.net.output_width();
    let mut xs = Vec::with_capacity(batch * width);
    let mut ys = Vec::with_capacity(batch * out_w);
    for _ in 0..batch {
        let e = &buffer.entries()[rng.random_range(0..buffer.len())];
        let t = rng.random_range(0..e.len());
        let tr = &e.transitions[t];
        let st = State { obs: tr.obs.clone(), t, done: false };
        xs.extend(model.input(&env.features(&st), e.return_to_go(t), e.len() - t));
        match &tr.action {
            Action::Index(a) => ys.extend((0..out_w).map(|k| if k == *a { 1.0 } else { 0.0 })),
            a @ Action::Vector(_) => ys.extend(unit_action(&model.action_space, a)),
        }
    }
    let x = Mat::from_vec(batch, width, xs);
    let y = Mat::from_vec(batch, out_w, ys);
    let finite = matches!(model.action_space, ActionSpace::Finite(_));
    let (_, grads) = grad(&model.net, &x, |g, out| {
        if finite {
            let ls = g.log_softmax(out);
            let target = g.leaf(y);
            let picked = g.mul(ls, target);
            let total = g.sum(picked);
            g.scale(total, -1.0 / batch as f64)
        } else {
            g.mse(out, y)
        }
    })?;
    adam.step(model.net.params_mut(), &grads)
}
