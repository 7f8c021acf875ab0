use crate::envs::{Action, ActionSpace, Env, EnvKind, State};
use crate::error::{Error, Result};
use crate::nn::{softmax_in_place, Activation, Mlp};
use crate::rng::{keyed_rng, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Largest tabular state space a snapshot table is built for.
pub const MAX_SNAPSHOT_STATES: usize = 100_000;

/// Return-conditioned policy: input is the state features followed by the
/// command `(desired return / return_scale, horizon / horizon_max)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcnModel {
    pub net: Mlp,
    pub return_scale: Vec<f64>,
    pub horizon_max: usize,
    pub action_space: ActionSpace,
    pub gamma: f64,
}

impl PcnModel {
    pub fn new(env: &Env, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let spec = env.spec();
        let mut widths = vec![env.feature_width() + spec.m + 1];
        widths.extend_from_slice(hidden);
        widths.push(spec.action_space.output_width());
        let output = match spec.action_space {
            ActionSpace::Finite(_) => Activation::Identity,
            ActionSpace::Box { .. } => Activation::Tanh,
        };
        Ok(Self {
            net: Mlp::new(&widths, Activation::Relu, output, rng)?,
            return_scale: spec.return_scale.clone(),
            horizon_max: spec.horizon,
            action_space: spec.action_space.clone(),
            gamma: spec.gamma,
        })
    }

    pub fn command(&self, desired: &[f64], horizon: usize) -> Vec<f64> {
        let mut c: Vec<f64> = desired.iter().zip(&self.return_scale).map(|(d, s)| d / s).collect();
        c.push(horizon as f64 / self.horizon_max as f64);
        c
    }

    pub fn input(&self, features: &[f64], desired: &[f64], horizon: usize) -> Vec<f64> {
        let mut x = features.to_vec();
        x.extend(self.command(desired, horizon));
        x
    }

    /// Action probabilities (finite spaces) for one input.
    pub fn probs(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.net.forward(input)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Greedy action, or a sampled/perturbed one when `explore` holds the rng.
    pub fn act(&self, input: &[f64], explore: Option<&mut Rng>) -> Result<Action> {
        act_with(&self.net, &self.action_space, input, explore)
    }

    /// Runs one episode following the command, decrementing it by each reward.
    pub fn rollout(
        &self,
        env: &Env,
        desired: &[f64],
        horizon: usize,
        seed: u64,
        rng: &mut Rng,
        explore: bool,
    ) -> Result<Vec<(State, Action, Vec<f64>)>> {
        let mut d = desired.to_vec();
        let mut h = horizon.max(1);
        let mut s = env.reset(seed);
        let mut out = Vec::new();
        while !s.done {
            let x = self.input(&env.features(&s), &d, h);
            let a = if explore { self.act(&x, Some(rng))? } else { self.act(&x, None)? };
            let tr = env.step(&s, &a, rng)?;
            for (di, ri) in d.iter_mut().zip(&tr.reward) {
                *di = (*di - ri) / self.gamma;
            }
            h = h.saturating_sub(1).max(1);
            out.push((s, a, tr.reward));
            s = tr.next_state;
        }
        Ok(out)
    }
}

fn act_with(net: &Mlp, space: &ActionSpace, input: &[f64], explore: Option<&mut Rng>) -> Result<Action> {
    let out = net.forward(input)?;
    Ok(match space {
        ActionSpace::Finite(_) => match explore {
            Some(rng) => {
                let mut p = out;
                softmax_in_place(&mut p);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut a = p.len() - 1;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        a = i;
                        break;
                    }
                }
                Action::Index(a)
            }
            None => Action::Index(argmax(&out)),
        },
        ActionSpace::Box { low, high } => {
            let mut unit = out;
            if let Some(rng) = explore {
                for u in unit.iter_mut() {
                    let n: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                    *u = (*u + 0.2 * n).clamp(-1.0, 1.0);
                }
            }
            Action::Vector(unit.iter().zip(low.iter().zip(high)).map(|(u, (l, h))| l + (u + 1.0) * 0.5 * (h - l)).collect())
        }
    })
}

/// Inverse of the box squashing: action to `[-1, 1]` units.
pub(crate) fn unit_action(space: &ActionSpace, a: &Action) -> Vec<f64> {
    match (space, a) {
        (ActionSpace::Box { low, high }, Action::Vector(v)) => {
            v.iter().zip(low.iter().zip(high)).map(|(x, (l, h))| 2.0 * (x - l) / (h - l) - 1.0).collect()
        }
        _ => unreachable!("unit_action on a finite action"),
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// How a snapshot's flat vector is laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EncodingKind {
    /// Row-major `states × actions` action-probability table.
    Table { states: usize, actions: usize },
    /// Network parameters followed by the `command_width` command entries.
    Network { widths: Vec<usize>, activations: Vec<Activation>, command_width: usize },
}

impl EncodingKind {
    pub fn len(&self) -> usize {
        match self {
            EncodingKind::Table { states, actions } => states * actions,
            EncodingKind::Network { widths, command_width, .. } => {
                widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + command_width
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_table(&self) -> bool {
        matches!(self, EncodingKind::Table { .. })
    }
}

/// A policy frozen at one point of training, as a flat vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    /// Episodes collected when the snapshot was taken.
    pub step_index: usize,
    pub env_id: String,
    pub kind: EncodingKind,
    pub encoding: Vec<f64>,
}

impl PolicySnapshot {
    pub fn validate(&self) -> Result<()> {
        if self.encoding.len() != self.kind.len() {
            return Err(Error::DimensionMismatch { expected: self.kind.len(), got: self.encoding.len() });
        }
        crate::error::check_finite("snapshot", &self.encoding)?;
        if let EncodingKind::Table { actions, .. } = self.kind {
            for (s, row) in self.encoding.chunks(actions).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::Invariant(format!("snapshot row {s} is not a distribution (sum {sum})")));
                }
            }
        }
        Ok(())
    }
}

/// Freezes the model conditioned on `(desired, horizon)`.
///
/// Discrete envs: the softmax at every state. States on the greedy path from
/// the start use the command as decremented along that path, so executing
/// the table greedily retraces the conditioned rollout; all other states use
/// the command as given. Continuous envs: the parameters plus the command.
pub fn snapshot_policy(model: &PcnModel, env: &Env, desired: &[f64], horizon: usize, step_index: usize) -> Result<PolicySnapshot> {
    let spec = env.spec();
    let mut snap = match spec.kind {
        EnvKind::Discrete => {
            let n = spec.state_count.expect("discrete env has a state count");
            if n > MAX_SNAPSHOT_STATES {
                return Err(Error::EnvTooLarge(format!("{}: {n} states", env.id())));
            }
            let k = spec.action_space.output_width();
            let mut table = vec![0.0; n * k];
            let mut filled = vec![false; n];
            let mut rng = keyed_rng(0, "pcn/snapshot-path");
            let (mut d, mut h) = (desired.to_vec(), horizon.max(1));
            let mut s = env.reset(0);
            while !s.done {
                let i = s.index().expect("tabular state");
                let x = model.input(&env.features(&s), &d, h);
                if !filled[i] {
                    table[i * k..(i + 1) * k].copy_from_slice(&model.probs(&x)?);
                    filled[i] = true;
                }
                let a = model.act(&x, None)?;
                let tr = env.step(&s, &a, &mut rng)?;
                for (di, ri) in d.iter_mut().zip(&tr.reward) {
                    *di = (*di - ri) / model.gamma;
                }
                h = h.saturating_sub(1).max(1);
                s = tr.next_state;
            }
            for i in (0..n).filter(|&i| !filled[i]) {
                let st = State { obs: crate::envs::Observation::Index(i), t: 0, done: false };
                let x = model.input(&env.features(&st), desired, horizon.max(1));
                table[i * k..(i + 1) * k].copy_from_slice(&model.probs(&x)?);
            }
            PolicySnapshot { step_index, env_id: env.id().to_string(), kind: EncodingKind::Table { states: n, actions: k }, encoding: table }
        }
        EnvKind::Continuous => {
            let mut encoding = model.net.params().to_vec();
            let command = model.command(desired, horizon.max(1));
            let command_width = command.len();
            encoding.extend(command);
            let kind = EncodingKind::Network {
                widths: model.net.widths().to_vec(),
                activations: model.net.activations().to_vec(),
                command_width,
            };
            PolicySnapshot { step_index, env_id: env.id().to_string(), kind, encoding }
        }
    };
    // stored as f32 downstream; round now so on-disk copies are exact
    for x in snap.encoding.iter_mut() {
        *x = *x as f32 as f64;
    }
    if let EncodingKind::Table { actions, .. } = snap.kind {
        for row in snap.encoding.chunks_mut(actions) {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    Ok(snap)
}

/// Expected discounted return of a snapshot executed greedily: argmax of each
/// table row, or the network driven by its stored command. Stochastic
/// environments average `episodes` rollouts.
pub fn evaluate_snapshot(env: &Env, snap: &PolicySnapshot, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = env.spec();
    if snap.encoding.len() != snap.kind.len() {
        return Err(Error::DimensionMismatch { expected: snap.kind.len(), got: snap.encoding.len() });
    }
    let episodes = episodes.max(1);
    let mut total = vec![0.0; spec.m];
    for ep in 0..episodes {
        let ep_seed = seed.wrapping_add(ep as u64);
        let mut rng = keyed_rng(ep_seed, "policy/eval");
        let rewards = match &snap.kind {
            EncodingKind::Table { states, actions } => {
                if Some(*states) != spec.state_count || *actions != spec.action_space.output_width() {
                    return Err(Error::Mismatch(format!("table {states}x{actions} does not fit {}", env.id())));
                }
                let mut s = env.reset(ep_seed);
                let mut rewards = Vec::new();
                while !s.done {
                    let i = s.index().expect("tabular state");
                    let a = argmax(&snap.encoding[i * actions..(i + 1) * actions]);
                    let tr = env.step(&s, &Action::Index(a), &mut rng)?;
                    rewards.push(tr.reward);
                    s = tr.next_state;
                }
                rewards
            }
            EncodingKind::Network { widths, activations, command_width } => {
                let n_params = snap.encoding.len() - command_width;
                let net = Mlp::from_parts(widths.clone(), activations.clone(), snap.encoding[..n_params].to_vec())?;
                let cmd = &snap.encoding[n_params..];
                let model = PcnModel {
                    net,
                    return_scale: spec.return_scale.clone(),
                    horizon_max: spec.horizon,
                    action_space: spec.action_space.clone(),
                    gamma: spec.gamma,
                };
                if cmd.len() != spec.m + 1 || model.net.input_width() != env.feature_width() + spec.m + 1 {
                    return Err(Error::Mismatch(format!("network snapshot does not fit {}", env.id())));
                }
                let desired: Vec<f64> = cmd[..spec.m].iter().zip(&spec.return_scale).map(|(c, s)| c * s).collect();
                let horizon = (cmd[spec.m] * spec.horizon as f64).round().max(1.0) as usize;
                model.rollout(env, &desired, horizon, ep_seed, &mut rng, false)?.into_iter().map(|(_, _, r)| r).collect()
            }
        };
        for (t, g) in total.iter_mut().zip(env.discounted_return(&rewards)) {
            *t += g;
        }
    }
    Ok(total.into_iter().map(|t| t / episodes as f64).collect())
}
