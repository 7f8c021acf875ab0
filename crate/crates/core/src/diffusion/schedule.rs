use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const BETA_FLOOR: f64 = 1e-5;
pub const BETA_CEIL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Linear,
    Cosine,
}

/// Per-step noise rates `beta[t-1]` for `t = 1..=T` and their running
/// products: `alpha_bar` for Gaussian noise, `gamma` (the probability that a
/// bit is still untouched) for Bernoulli noise. Both are stored in
/// `cumulative`, with `cumulative[0] = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub beta: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from per-step rates, checking every invariant.
    pub fn from_betas(kind: ScheduleKind, beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("schedule needs T >= 1".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(BETA_FLOOR..=BETA_CEIL).contains(*b)) {
            return Err(Error::InvalidArgument(format!("beta {b} outside [{BETA_FLOOR}, {BETA_CEIL}]")));
        }
        let mut cumulative = Vec::with_capacity(beta.len() + 1);
        cumulative.push(1.0);
        for b in &beta {
            let next = cumulative.last().unwrap() * (1.0 - b);
            cumulative.push(next);
        }
        Ok(Self { kind, beta, cumulative })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// `beta_t` for `1 <= t <= T`.
    pub fn beta_at(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// `alpha_bar_t` or `gamma_t`, for `0 <= t <= T`.
    pub fn cumulative_at(&self, t: usize) -> f64 {
        self.cumulative[t]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidArgument(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    fn check_kind(&self, kind: ScheduleKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Mismatch(format!("{:?} operation on a {:?} schedule", kind, self.kind)));
        }
        Ok(())
    }
}

pub fn make_schedule(kind: ScheduleKind, steps: usize, beta_min: f64, beta_max: f64, shape: ScheduleShape) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidArgument("schedule needs T >= 1".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")));
    }
    let beta = match shape {
        ScheduleShape::Linear if steps == 1 => vec![beta_min],
        ScheduleShape::Linear => {
            (0..steps).map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64).collect()
        }
        ScheduleShape::Cosine => {
            let s = 0.008;
            let f = |t: usize| (((t as f64 / steps as f64) + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            (1..=steps).map(|t| (1.0 - f(t) / f(t - 1)).clamp(beta_min, beta_max)).collect()
        }
    };
    NoiseSchedule::from_betas(kind, beta)
}

pub(crate) fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `x_t ~ N(sqrt(alpha_bar_t) x0, (1 - alpha_bar_t) I)`.
pub fn forward_sample_continuous(x0: &[f64], t: usize, sched: &NoiseSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    sched.check_kind(ScheduleKind::Gaussian)?;
    sched.check_step(t)?;
    let ab = sched.cumulative_at(t);
    Ok(x0.iter().map(|x| ab.sqrt() * x + (1.0 - ab).sqrt() * normal(rng)).collect())
}

/// One Markov step `x_t ~ N(sqrt(1 - beta_t) x_{t-1}, beta_t I)`.
pub fn forward_step_continuous(x_prev: &[f64], t: usize, sched: &NoiseSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    sched.check_kind(ScheduleKind::Gaussian)?;
    sched.check_step(t)?;
    let b = sched.beta_at(t);
    Ok(x_prev.iter().map(|x| (1.0 - b).sqrt() * x + b.sqrt() * normal(rng)).collect())
}

pub(crate) fn check_binary(x: &[f64]) -> Result<()> {
    if x.iter().any(|b| *b != 0.0 && *b != 1.0) {
        return Err(Error::InvalidArgument("expected a 0/1 vector".into()));
    }
    Ok(())
}

// Keep the bit with probability `keep`, otherwise replace it by a fair coin.
fn resample_bits(x: &[f64], keep: f64, rng: &mut Rng) -> Vec<f64> {
    x.iter()
        .map(|b| if rng.random::<f64>() < keep { *b } else if rng.random::<bool>() { 1.0 } else { 0.0 })
        .collect()
}

/// Each bit survives with probability `gamma_t` and is otherwise uniform, so
/// it agrees with `x0` with probability `(1 + gamma_t) / 2`.
pub fn forward_sample_discrete(x0: &[f64], t: usize, sched: &NoiseSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    sched.check_kind(ScheduleKind::Bernoulli)?;
    sched.check_step(t)?;
    check_binary(x0)?;
    Ok(resample_bits(x0, sched.cumulative_at(t), rng))
}

/// One Markov step: each bit is re-drawn uniformly with probability `beta_t`.
pub fn forward_step_discrete(x_prev: &[f64], t: usize, sched: &NoiseSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    sched.check_kind(ScheduleKind::Bernoulli)?;
    sched.check_step(t)?;
    check_binary(x_prev)?;
    Ok(resample_bits(x_prev, 1.0 - sched.beta_at(t), rng))
}

/// `q(x_{t-1} = 1 | x_t, x0)` for one bit.
pub fn bernoulli_posterior(x_t: f64, x0: f64, t: usize, sched: &NoiseSchedule) -> f64 {
    let b = sched.beta_at(t);
    let g_prev = sched.cumulative_at(t - 1);
    let prior_one = g_prev * x0 + (1.0 - g_prev) * 0.5;
    // likelihood of the observed x_t given x_{t-1} = 1 / = 0
    let (l1, l0) = if x_t == 1.0 { (1.0 - b / 2.0, b / 2.0) } else { (b / 2.0, 1.0 - b / 2.0) };
    prior_one * l1 / (prior_one * l1 + (1.0 - prior_one) * l0)
}

/// Pool-adjacent-violators projection onto nondecreasing sequences.
pub fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 <= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks.into_iter().flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c)).collect()
}
