use super::schedule::{bernoulli_posterior, forward_sample_discrete, normal, NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Graph, Mat, Mlp};
use crate::rng::RngKey;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub const T_EMBED_DIM: usize = 16;

/// Sinusoidal features of `t / T` at octave-spaced frequencies.
pub fn t_embedding(t: usize, steps: usize) -> Vec<f64> {
    let u = t as f64 / steps.max(1) as f64;
    let mut out = Vec::with_capacity(T_EMBED_DIM);
    for j in 0..T_EMBED_DIM / 2 {
        let w = std::f64::consts::PI * (1u64 << j) as f64;
        out.push((w * u).sin());
        out.push((w * u).cos());
    }
    out
}

/// Noise predictor `(x_t, t, z) -> epsilon` (Gaussian) or predictor of the
/// per-bit probability that `x_{t-1} = 1` (Bernoulli).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub net: Mlp,
    pub kind: ScheduleKind,
    pub width: usize,
    pub latent_dim: usize,
    pub steps: usize,
}

impl Denoiser {
    pub fn input(&self, x_t: &[f64], t: usize, z: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.net.input_width());
        v.extend_from_slice(x_t);
        v.extend(t_embedding(t, self.steps));
        v.extend_from_slice(z);
        v
    }

    pub fn predict(&self, x_t: &[f64], t: usize, z: &[f64]) -> Result<Vec<f64>> {
        if x_t.len() != self.width {
            return Err(Error::DimensionMismatch { expected: self.width, got: x_t.len() });
        }
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch { expected: self.latent_dim, got: z.len() });
        }
        self.net.forward(&self.input(x_t, t, z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 128], steps: 3_000, batch_size: 32, lr: 1e-3 }
    }
}

/// Clean examples and, optionally, the latent attached to each example at
/// every diffusion step (`latents[i][t]`). Without latents the network still
/// has a `latent_dim`-wide input that only ever sees zeros.
pub struct TrainingSet<'a> {
    pub x0: &'a [Vec<f64>],
    pub latents: Option<&'a [Vec<Vec<f64>>]>,
    pub latent_dim: usize,
}

/// Fits the denoiser; returns it with the per-step training losses.
pub fn train_denoiser(data: &TrainingSet, sched: &NoiseSchedule, config: &DenoiserConfig, key: &RngKey) -> Result<(Denoiser, Vec<f64>)> {
    let (mut dens, trace) = train_denoiser_checkpoints(data, sched, config, key, &[config.steps])?;
    Ok((dens.pop().expect("one checkpoint"), trace))
}

/// As [`train_denoiser`], also returning copies of the network after each
/// of the (strictly increasing, ≤ `config.steps`) `checkpoints` step counts.
/// The last checkpoint need not be the final step.
pub fn train_denoiser_checkpoints(
    data: &TrainingSet,
    sched: &NoiseSchedule,
    config: &DenoiserConfig,
    key: &RngKey,
    checkpoints: &[usize],
) -> Result<(Vec<Denoiser>, Vec<f64>)> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints.last() > Some(&config.steps) {
        return Err(Error::InvalidArgument(format!("checkpoints {checkpoints:?} must be increasing and at most {}", config.steps)));
    }
    let width = data.x0.first().map(Vec::len).ok_or_else(|| Error::InvalidArgument("no training examples".into()))?;
    if let Some(lat) = data.latents {
        if lat.len() != data.x0.len() || lat.iter().any(|l| l.len() != sched.steps() + 1) {
            return Err(Error::InvalidArgument("need one latent per example and step".into()));
        }
    }
    if sched.kind == ScheduleKind::Bernoulli {
        for x in data.x0 {
            super::schedule::check_binary(x)?;
        }
    }
    let mut widths = vec![width + T_EMBED_DIM + data.latent_dim];
    widths.extend_from_slice(&config.hidden);
    widths.push(width);
    let output = match sched.kind {
        ScheduleKind::Gaussian => Activation::Identity,
        ScheduleKind::Bernoulli => Activation::Sigmoid,
    };
    let mut den = Denoiser {
        net: Mlp::new(&widths, Activation::Relu, output, &mut key.child("init").rng())?,
        kind: sched.kind,
        width,
        latent_dim: data.latent_dim,
        steps: sched.steps(),
    };
    let mut adam = Adam::new(den.net.param_count(), config.lr);
    let mut rng = key.child("batches").rng();
    let zeros = vec![0.0; data.latent_dim];
    let mut trace = Vec::with_capacity(config.steps);
    let b = config.batch_size.max(1);
    let mut saved = Vec::with_capacity(checkpoints.len());
    let snapshot = |den: &Denoiser| {
        let mut d = den.clone();
        d.net.round_to_f32();
        d
    };
    if checkpoints[0] == 0 {
        saved.push(snapshot(&den));
    }
    for step in 1..=config.steps {
        let mut xs = Vec::with_capacity(b * den.net.input_width());
        let mut ys = Vec::with_capacity(b * width);
        for _ in 0..b {
            let i = rng.random_range(0..data.x0.len());
            let t = rng.random_range(1..=sched.steps());
            let x0 = &data.x0[i];
            let z = data.latents.map(|l| l[i][t].as_slice()).unwrap_or(&zeros);
            match sched.kind {
                ScheduleKind::Gaussian => {
                    let ab = sched.cumulative_at(t);
                    let eps: Vec<f64> = (0..width).map(|_| normal(&mut rng)).collect();
                    let x_t: Vec<f64> = x0.iter().zip(&eps).map(|(x, e)| ab.sqrt() * x + (1.0 - ab).sqrt() * e).collect();
                    xs.extend(den.input(&x_t, t, z));
                    ys.extend(eps);
                }
                ScheduleKind::Bernoulli => {
                    let x_t = forward_sample_discrete(x0, t, sched, &mut rng)?;
                    ys.extend(x_t.iter().zip(x0).map(|(xt, x0)| bernoulli_posterior(*xt, *x0, t, sched)));
                    xs.extend(den.input(&x_t, t, z));
                }
            }
        }
        let x = Mat::from_vec(b, den.net.input_width(), xs);
        let y = Mat::from_vec(b, width, ys);
        let mut g = Graph::new();
        let vars = den.net.vars(&mut g);
        let xin = g.leaf(x);
        let out = den.net.apply(&mut g, &vars, xin);
        let loss = match sched.kind {
            ScheduleKind::Gaussian => g.mse(out, y),
            ScheduleKind::Bernoulli => bce(&mut g, out, y),
        };
        g.backward(loss)?;
        trace.push(g.value(loss).scalar());
        let grads = den.net.gradient(&g, &vars);
        adam.step(den.net.params_mut(), &grads)?;
        if checkpoints.contains(&step) {
            saved.push(snapshot(&den));
        }
    }
    Ok((saved, trace))
}

/// Mean binary cross-entropy of probabilities `p` against soft targets `y`.
fn bce(g: &mut Graph, p: crate::nn::Var, y: Mat) -> crate::nn::Var {
    let eps = 1e-7;
    let n = y.data.len() as f64;
    let one_minus_y = Mat { rows: y.rows, cols: y.cols, data: y.data.iter().map(|v| 1.0 - v).collect() };
    let y = g.leaf(y);
    let ny = g.leaf(one_minus_y);
    let pc = g.add_scalar(p, eps);
    let lp = g.log(pc);
    let neg = g.scale(p, -1.0);
    let q = g.add_scalar(neg, 1.0 + eps);
    let lq = g.log(q);
    let a = g.mul(y, lp);
    let b2 = g.mul(ny, lq);
    let s = g.add(a, b2);
    let total = g.sum(s);
    g.scale(total, -1.0 / n)
}
