//! Latent causal representation of search sequences: an encoder from
//! windows of (snapshot, return) pairs to latents `z_t`, lag-`L` latent
//! dynamics, a decoder tying latents to consecutive snapshots, and a
//! density model of the dynamics residuals used for shift detection.
//!
//! Time runs in generation order: the parents of `z_t` are the latents of
//! the noisier steps `t+1, …, t+L`, and the window of `z_t` covers steps
//! `t, …, t+L-1`, zero-padded past `T`.

mod flow;
mod latent;

pub use flow::{flow_logdensity, MonotoneMap, NoiseFlow};
pub use latent::{Decoder, LatentDynamics};

use crate::diffusion::PreparedData;
use crate::error::{check_finite, Error, Result};
use crate::nn::{Activation, Adam, Graph, Mat, Mlp};
use crate::rng::RngKey;
use latent::{normal_mat, step_all};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrlConfig {
    pub latent_dim: usize,
    pub lags: usize,
    pub encoder_hidden: Vec<usize>,
    pub dynamics_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub latent_l2: f64,
    pub flow_hidden: usize,
    pub flow_steps: usize,
    pub flow_lr: f64,
    /// Training log-density quantile below which a residual is a shift.
    pub shift_quantile: f64,
}

impl Default for CrlConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            lags: 3,
            encoder_hidden: vec![64],
            dynamics_hidden: vec![32],
            decoder_hidden: vec![64],
            steps: 1_500,
            batch_size: 32,
            lr: 1e-3,
            latent_l2: 1e-3,
            flow_hidden: 4,
            flow_steps: 300,
            flow_lr: 1e-2,
            shift_quantile: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlModel {
    pub encoder: Mlp,
    pub dynamics: LatentDynamics,
    pub decoder: Decoder,
    pub flow: NoiseFlow,
    pub shift_threshold: f64,
    /// Snapshot width and objective count of one window entry.
    pub width: usize,
    pub m: usize,
}

impl CrlModel {
    pub fn latent_dim(&self) -> usize {
        self.dynamics.latent_dim
    }

    pub fn lags(&self) -> usize {
        self.dynamics.lags
    }

    /// `z` from exactly `L` consecutive `(snapshot, return)` pairs, the
    /// current step first.
    pub fn encode(&self, window: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
        if window.len() != self.lags() {
            return Err(Error::DimensionMismatch { expected: self.lags(), got: window.len() });
        }
        let mut flat = Vec::with_capacity(self.encoder.input_width());
        for (s, r) in window {
            if s.len() != self.width || r.len() != self.m {
                return Err(Error::DimensionMismatch { expected: self.width + self.m, got: s.len() + r.len() });
            }
            flat.extend_from_slice(s);
            flat.extend_from_slice(r);
        }
        self.encoder.forward(&flat)
    }

    /// Dynamics residual `z_t - f(lags, 0)`.
    pub fn residual(&self, z: &[f64], lags: &[Vec<f64>]) -> Result<Vec<f64>> {
        let pred = self.dynamics.predict(lags, &vec![0.0; self.latent_dim()])?;
        Ok(z.iter().zip(pred).map(|(a, b)| a - b).collect())
    }
}

/// Flattened encoder input for step `t` of sequence `i`.
fn window_input(data: &PreparedData, i: usize, t: usize, lags: usize) -> Vec<f64> {
    let (w, m) = (data.width(), data.m());
    let mut out = Vec::with_capacity(lags * (w + m));
    for j in 0..lags {
        let tau = t + j;
        if tau <= data.steps {
            out.extend_from_slice(&data.snapshots[i][tau]);
            out.extend_from_slice(&data.returns[i][tau]);
        } else {
            out.extend(std::iter::repeat_n(0.0, w + m));
        }
    }
    out
}

/// Latents of the clean windows, `z[i][t]` for `t = 0..=T`.
pub fn latent_table(model: &CrlModel, data: &PreparedData) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..data.len())
        .map(|i| (0..=data.steps).map(|t| model.encoder.forward(&window_input(data, i, t, model.lags()))).collect())
        .collect()
}

/// Parents `z_{t+1}, …, z_{t+L}` from a latent table row, the latent of the
/// all-zero window standing in past `T`.
fn parents(row: &[Vec<f64>], t: usize, lags: usize, zero: &[f64]) -> Vec<Vec<f64>> {
    (1..=lags).map(|tau| row.get(t + tau).cloned().unwrap_or_else(|| zero.to_vec())).collect()
}

/// Joint training of encoder, dynamics and decoder, then a maximum
/// likelihood fit of the residual flow and its shift threshold. Returns the
/// model and the per-step joint loss.
pub fn train_crl(data: &PreparedData, config: &CrlConfig, key: &RngKey) -> Result<(CrlModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no sequences for representation learning".into()));
    }
    let (k, lags, w, m) = (config.latent_dim, config.lags, data.width(), data.m());
    if k == 0 || lags == 0 {
        return Err(Error::InvalidArgument("latent_dim and lags must be positive".into()));
    }
    let mut widths = vec![lags * (w + m)];
    widths.extend_from_slice(&config.encoder_hidden);
    widths.push(k);
    let mut encoder = Mlp::new(&widths, Activation::Tanh, Activation::Identity, &mut key.child("encoder").rng())?;
    let mut dynamics = LatentDynamics::new(k, lags, &config.dynamics_hidden, &mut key.child("dynamics").rng())?;
    let mut decoder = Decoder::new(k, w, &config.decoder_hidden, &mut key.child("decoder").rng())?;
    let n_params = encoder.param_count() + dynamics.param_count() + decoder.net.param_count();
    let mut adam = Adam::new(n_params, config.lr);
    let mut rng = key.child("batches").rng();
    let b = config.batch_size.max(1);
    let mut trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let picks: Vec<(usize, usize)> =
            (0..b).map(|_| (rng.random_range(0..data.len()), rng.random_range(1..=data.steps))).collect();
        let eps = normal_mat(b, k, &mut rng);
        let mut g = Graph::new();
        let ev = encoder.vars(&mut g);
        let dv = dynamics.vars(&mut g);
        let cv = decoder.net.vars(&mut g);
        // z at offsets 0..=L from the picked step
        let zs: Vec<_> = (0..=lags)
            .map(|j| {
                let rows: Vec<Vec<f64>> = picks.iter().map(|(i, t)| window_input(data, *i, t + j, lags)).collect();
                let x = g.leaf(Mat::from_rows(&rows));
                encoder.apply(&mut g, &ev, x)
            })
            .collect();
        let lag_var = latent::concat_all(&mut g, &zs[1..]);
        let pred = dynamics.apply(&mut g, &dv, lag_var, &eps);
        let dz = g.sub(pred, zs[0]);
        let dz2 = g.square(dz);
        let dyn_loss = g.mean(dz2);
        let prev: Vec<Vec<f64>> = picks.iter().map(|(i, t)| data.snapshots[*i][t - 1].clone()).collect();
        let cur: Vec<Vec<f64>> = picks.iter().map(|(i, t)| data.snapshots[*i][*t].clone()).collect();
        let pv = g.leaf(Mat::from_rows(&prev));
        let dec_in = g.concat_cols(zs[0], pv);
        let dec_out = decoder.net.apply(&mut g, &cv, dec_in);
        let dec_loss = g.mse(dec_out, Mat::from_rows(&cur));
        let z2 = g.square(zs[0]);
        let zmean = g.mean(z2);
        let reg = g.scale(zmean, config.latent_l2);
        let partial = g.add(dyn_loss, dec_loss);
        let loss = g.add(partial, reg);
        g.backward(loss)?;
        let value = g.value(loss).scalar();
        if !value.is_finite() {
            return Err(Error::NonFinite("representation loss".into()));
        }
        trace.push(value);
        let mut grads = encoder.gradient(&g, &ev);
        grads.extend(dynamics.gradient(&g, &dv));
        grads.extend(decoder.net.gradient(&g, &cv));
        let parts = std::iter::once(encoder.params_mut()).chain(dynamics.params_mut()).chain(std::iter::once(decoder.net.params_mut()));
        step_all(&mut adam, parts, &grads)?;
    }
    encoder.round_to_f32();
    dynamics.nets.iter_mut().for_each(Mlp::round_to_f32);
    decoder.net.round_to_f32();
    let mut model = CrlModel { encoder, dynamics, decoder, flow: NoiseFlow::identity(k), shift_threshold: f64::NEG_INFINITY, width: w, m };

    let table = latent_table(&model, data)?;
    let zero = model.encoder.forward(&vec![0.0; model.encoder.input_width()])?;
    let mut residuals = Vec::with_capacity(data.len() * (data.steps + 1));
    for row in &table {
        for (t, z) in row.iter().enumerate() {
            check_finite("latent", z)?;
            residuals.push(model.residual(z, &parents(row, t, lags, &zero))?);
        }
    }
    model.flow = NoiseFlow::fit(&residuals, config.flow_hidden, config.flow_steps, config.flow_lr, &mut key.child("flow").rng())?;
    let mut dens: Vec<f64> = residuals.iter().map(|r| flow_logdensity(&model.flow, r)).collect::<Result<_>>()?;
    model.shift_threshold = quantile(&mut dens, config.shift_quantile);
    Ok((model, trace))
}

fn quantile(xs: &mut [f64], q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let idx = ((xs.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize;
    xs[idx]
}

/// The residual `z_t - ẑ_t` if its log-density under `flow` falls below
/// `threshold`.
pub fn detect_shift(z: &[f64], z_hat: &[f64], flow: &NoiseFlow, threshold: f64) -> Result<Option<Vec<f64>>> {
    if z.len() != z_hat.len() {
        return Err(Error::DimensionMismatch { expected: z_hat.len(), got: z.len() });
    }
    let r: Vec<f64> = z.iter().zip(z_hat).map(|(a, b)| a - b).collect();
    Ok((flow_logdensity(flow, &r)? < threshold).then_some(r))
}

/// Greedy action of `head` on the lag window with `delta` added to every lag.
pub fn adapt_policy_input(lags: &[Vec<f64>], delta: &[f64], head: &Mlp) -> Result<usize> {
    let mut input = Vec::with_capacity(head.input_width());
    for z in lags {
        if z.len() != delta.len() {
            return Err(Error::DimensionMismatch { expected: delta.len(), got: z.len() });
        }
        input.extend(z.iter().zip(delta).map(|(a, b)| a + b));
    }
    let out = head.forward(&input)?;
    Ok(out.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0))
}
