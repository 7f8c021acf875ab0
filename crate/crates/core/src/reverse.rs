//! Reverse diffusion from noise to policies: latent-conditioned denoising
//! steps, each refined by one gradient step on the composite loss
//! `‖μ - x_prev‖² + β ‖d(x_prev, z) - x_t‖² + λ ‖x_prev‖₁`.

use crate::crl::{detect_shift, CrlModel, Decoder};
use crate::diffusion::{bits_to_table, Denoiser, NoiseSchedule, PreparedData, ScheduleKind};
use crate::envs::Env;
use crate::error::{check_finite, Error, Result};
use crate::metrics::nondominated;
use crate::nn::{Graph, Mat};
use crate::pcn::{evaluate_snapshot, EncodingKind, PolicySnapshot};
use crate::rng::{Rng, RngKey};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Standardized units beyond which continuous chains are clipped.
pub const CLIP: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReverseConfig {
    pub alpha: f64,
    pub beta_loss: f64,
    pub lambda: f64,
    pub n_samples: usize,
    /// Rollouts per generated policy when scoring it.
    pub eval_episodes: usize,
    /// Reverse steps between re-evaluations of the chains' returns that feed
    /// the encoder window.
    pub return_refresh: usize,
}

impl Default for ReverseConfig {
    fn default() -> Self {
        Self { alpha: 0.1, beta_loss: 1.0, lambda: 1e-4, n_samples: 32, eval_episodes: 10, return_refresh: 10 }
    }
}

impl ReverseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta_loss >= 0.0) || !(self.lambda >= 0.0) || self.n_samples == 0 {
            return Err(Error::InvalidArgument("need alpha > 0, beta_loss >= 0, lambda >= 0, n_samples >= 1".into()));
        }
        Ok(())
    }
}

/// Posterior mean `μ_θ(x_t) = (x_t - β_t / sqrt(1 - ᾱ_t) ε̂) / sqrt(1 - β_t)`.
pub fn posterior_mean(x_t: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Vec<f64> {
    let (b, ab) = (sched.beta_at(t), sched.cumulative_at(t));
    let c = b / (1.0 - ab).sqrt();
    x_t.iter().zip(eps_hat).map(|(x, e)| (x - c * e) / (1.0 - b).sqrt()).collect()
}

fn check_kind(den: &Denoiser, sched: &NoiseSchedule, kind: ScheduleKind) -> Result<()> {
    if den.kind != kind || sched.kind != kind {
        return Err(Error::Mismatch(format!("{kind:?} step with a {:?} denoiser and {:?} schedule", den.kind, sched.kind)));
    }
    if sched.steps() != den.steps {
        return Err(Error::Mismatch("denoiser and schedule disagree on T".into()));
    }
    Ok(())
}

/// Denoising mean of the step `x_t -> x_{t-1}`: the Gaussian posterior mean,
/// or the predicted per-bit probabilities.
pub fn denoising_mean(x_t: &[f64], t: usize, den: &Denoiser, sched: &NoiseSchedule, z: &[f64]) -> Result<Vec<f64>> {
    if t == 0 || t > sched.steps() {
        return Err(Error::InvalidArgument(format!("step {t} outside 1..={}", sched.steps())));
    }
    let out = den.predict(x_t, t, z)?;
    Ok(match sched.kind {
        ScheduleKind::Gaussian => posterior_mean(x_t, &out, t, sched),
        ScheduleKind::Bernoulli => out,
    })
}

/// `x_{t-1} = μ_θ + sqrt(β_t) η`, without noise at `t = 1`.
pub fn reverse_step_continuous(x_t: &[f64], t: usize, den: &Denoiser, sched: &NoiseSchedule, z: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    check_kind(den, sched, ScheduleKind::Gaussian)?;
    let mu = denoising_mean(x_t, t, den, sched, z)?;
    if t == 1 {
        return Ok(mu);
    }
    let s = sched.beta_at(t).sqrt();
    Ok(mu.into_iter().map(|m| m + s * { let e: f64 = StandardNormal.sample(rng); e }).collect())
}

/// Every bit drawn from the predicted Bernoulli distribution.
pub fn reverse_step_discrete(x_t: &[f64], t: usize, den: &Denoiser, sched: &NoiseSchedule, z: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    check_kind(den, sched, ScheduleKind::Bernoulli)?;
    if x_t.iter().any(|b| *b != 0.0 && *b != 1.0) {
        return Err(Error::InvalidArgument("expected a 0/1 vector".into()));
    }
    let p = denoising_mean(x_t, t, den, sched, z)?;
    Ok(sample_bits(&p, rng))
}

fn sample_bits(p: &[f64], rng: &mut Rng) -> Vec<f64> {
    p.iter().map(|p| if rng.random::<f64>() < *p { 1.0 } else { 0.0 }).collect()
}

/// Composite loss and its gradient with respect to `x_prev`; `mu` is the
/// denoising mean of `x_t`. Without a decoder the consistency term is
/// dropped.
pub fn composite_loss(
    x_prev: &[f64],
    x_t: &[f64],
    z: &[f64],
    mu: &[f64],
    decoder: Option<&Decoder>,
    beta_loss: f64,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = x_prev.len();
    if x_t.len() != d || mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x_t.len().min(mu.len()) });
    }
    for (what, v) in [("x_prev", x_prev), ("x_t", x_t), ("z", z), ("denoising mean", mu)] {
        check_finite(what, v)?;
    }
    let mut g = Graph::new();
    let xp = g.leaf(Mat::row_vec(x_prev.to_vec()));
    let muv = g.leaf(Mat::row_vec(mu.to_vec()));
    let diff = g.sub(muv, xp);
    let sq = g.square(diff);
    let mut loss = g.sum(sq);
    if let Some(dec) = decoder.filter(|_| beta_loss != 0.0) {
        if dec.width != d || dec.latent_dim != z.len() {
            return Err(Error::DimensionMismatch { expected: dec.width + dec.latent_dim, got: d + z.len() });
        }
        let vars = dec.net.vars(&mut g);
        let zv = g.leaf(Mat::row_vec(z.to_vec()));
        let input = g.concat_cols(zv, xp);
        let out = dec.net.apply(&mut g, &vars, input);
        let xt = g.leaf(Mat::row_vec(x_t.to_vec()));
        let r = g.sub(out, xt);
        let r2 = g.square(r);
        let s = g.sum(r2);
        let term = g.scale(s, beta_loss);
        loss = g.add(loss, term);
    }
    if lambda != 0.0 {
        let a = g.abs(xp);
        let s = g.sum(a);
        let term = g.scale(s, lambda);
        loss = g.add(loss, term);
    }
    g.backward(loss)?;
    Ok((g.value(loss).scalar(), g.grad(xp).data))
}

/// One gradient step `x_prev - α ∇L`; continuous chains are clipped to
/// `±CLIP`, binary ones clamped to `[0, 1]` and thresholded at one half.
pub fn crl_guided_update(
    x_prev: &[f64],
    x_t: &[f64],
    z: &[f64],
    mu: &[f64],
    decoder: Option<&Decoder>,
    cfg: &ReverseConfig,
    kind: ScheduleKind,
) -> Result<(Vec<f64>, f64)> {
    let (loss, grad) = composite_loss(x_prev, x_t, z, mu, decoder, cfg.beta_loss, cfg.lambda)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("composite-loss gradient (loss {loss})")));
    }
    let stepped = x_prev.iter().zip(&grad).map(|(x, g)| x - cfg.alpha * g);
    let out = match kind {
        ScheduleKind::Gaussian => stepped.map(|x| x.clamp(-CLIP, CLIP)).collect(),
        ScheduleKind::Bernoulli => stepped.map(|x| if x.clamp(0.0, 1.0) >= 0.5 { 1.0 } else { 0.0 }).collect(),
    };
    Ok((out, loss))
}

/// Trained components used for generation; `crl` is absent in the ablation.
pub struct Models<'a> {
    pub denoiser: &'a Denoiser,
    pub crl: Option<&'a CrlModel>,
    pub data: &'a PreparedData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub env_id: String,
    pub with_crl: bool,
    pub snapshots: Vec<PolicySnapshot>,
    pub returns: Vec<Vec<f64>>,
    pub front: Vec<Vec<f64>>,
    /// Mean composite loss over chains, from step `T` down to 1.
    pub loss_trace: Vec<f64>,
    /// Latent residuals flagged as shifts across all chains and steps.
    pub shift_detections: usize,
}

/// Executable snapshot from a generated diffusion-space vector.
pub fn decode_snapshot(x: &[f64], data: &PreparedData) -> Result<PolicySnapshot> {
    let encoding = match (&data.encoding, &data.standardizer) {
        (EncodingKind::Table { actions, .. }, _) => bits_to_table(x, *actions),
        (EncodingKind::Network { .. }, Some(st)) => st.invert(x),
        (EncodingKind::Network { .. }, None) => x.to_vec(),
    };
    let snap = PolicySnapshot { step_index: 0, env_id: data.env_id.clone(), kind: data.encoding.clone(), encoding };
    snap.validate()?;
    Ok(snap)
}

/// Mean of the nondominated subset of `points`, the generation-time analogue
/// of the aggregate return recorded next to each training snapshot.
fn nd_mean(points: &[Vec<f64>], m: usize) -> Result<Vec<f64>> {
    let front = nondominated(points)?;
    let mut mean = vec![0.0; m];
    for p in front.points() {
        for (a, x) in mean.iter_mut().zip(p) {
            *a += x / front.len() as f64;
        }
    }
    Ok(mean)
}

/// Runs `n_samples` chains from pure noise to policies and scores them.
pub fn generate_policies(env: &Env, models: &Models, sched: &NoiseSchedule, cfg: &ReverseConfig, key: &RngKey) -> Result<GenerationReport> {
    cfg.validate()?;
    let data = models.data;
    let den = models.denoiser;
    if data.env_id != env.id() {
        return Err(Error::Mismatch(format!("models for {} used on {}", data.env_id, env.id())));
    }
    if data.kind != sched.kind || den.kind != sched.kind || den.steps != sched.steps() {
        return Err(Error::Mismatch("schedule, data and denoiser disagree".into()));
    }
    let (w, m, k) = (data.width(), data.m(), den.latent_dim);
    let lags = models.crl.map(|c| c.lags()).unwrap_or(1);
    if let Some(crl) = models.crl {
        if crl.latent_dim() != k || crl.width != w || crl.m != m {
            return Err(Error::Mismatch("representation does not fit the denoiser".into()));
        }
    }
    let n = cfg.n_samples;
    let big_t = sched.steps();
    let mut rng = key.child("chains").rng();
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|_| match sched.kind {
            ScheduleKind::Gaussian => (0..w).map(|_| StandardNormal.sample(&mut rng)).collect(),
            ScheduleKind::Bernoulli => sample_bits(&vec![0.5; w], &mut rng),
        })
        .collect();
    let score = |xs: &[Vec<f64>], episodes: usize| -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|xi| evaluate_snapshot(env, &decode_snapshot(xi, data)?, episodes, key.seed)).collect()
    };
    let zero_entry = vec![0.0; w + m];
    // window entries (snapshot ++ scaled return), most recent first
    let mut history: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut latents: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let zero_z = match models.crl {
        Some(crl) => crl.encoder.forward(&vec![0.0; crl.encoder.input_width()])?,
        None => vec![0.0; k],
    };
    let mut pop_return = vec![0.0; m];
    let mut loss_trace = Vec::with_capacity(big_t);
    let mut shift_detections = 0;
    for t in (1..=big_t).rev() {
        if models.crl.is_some() && (big_t - t).is_multiple_of(cfg.return_refresh.max(1)) {
            let raw = nd_mean(&score(&x, 1)?, m)?;
            pop_return = raw.iter().zip(&data.return_scale).map(|(r, s)| r / s).collect();
        }
        let mut step_loss = 0.0;
        for c in 0..n {
            let z = match models.crl {
                Some(crl) => {
                    let mut entry = x[c].clone();
                    entry.extend_from_slice(&pop_return);
                    history[c].insert(0, entry);
                    history[c].truncate(lags);
                    let mut flat = Vec::with_capacity(lags * (w + m));
                    for j in 0..lags {
                        flat.extend_from_slice(history[c].get(j).unwrap_or(&zero_entry));
                    }
                    let z = crl.encoder.forward(&flat)?;
                    let parents: Vec<Vec<f64>> = (0..lags).map(|j| latents[c].get(j).cloned().unwrap_or_else(|| zero_z.clone())).collect();
                    let z_hat = crl.dynamics.predict(&parents, &vec![0.0; k])?;
                    if detect_shift(&z, &z_hat, &crl.flow, crl.shift_threshold)?.is_some() {
                        shift_detections += 1;
                    }
                    latents[c].insert(0, z.clone());
                    latents[c].truncate(lags);
                    z
                }
                None => vec![0.0; k],
            };
            let mu = denoising_mean(&x[c], t, den, sched, &z)?;
            let prev = match sched.kind {
                ScheduleKind::Gaussian if t > 1 => {
                    let s = sched.beta_at(t).sqrt();
                    mu.iter().map(|v| v + s * { let e: f64 = StandardNormal.sample(&mut rng); e }).collect()
                }
                ScheduleKind::Gaussian => mu.clone(),
                ScheduleKind::Bernoulli => sample_bits(&mu, &mut rng),
            };
            let decoder = models.crl.map(|c| &c.decoder);
            let (refined, loss) = crl_guided_update(&prev, &x[c], &z, &mu, decoder, cfg, sched.kind)?;
            step_loss += loss / n as f64;
            x[c] = refined;
        }
        loss_trace.push(step_loss);
    }
    let snapshots: Vec<PolicySnapshot> = x.iter().map(|xi| decode_snapshot(xi, data)).collect::<Result<_>>()?;
    let returns: Vec<Vec<f64>> = snapshots.iter().map(|s| evaluate_snapshot(env, s, cfg.eval_episodes, key.seed)).collect::<Result<_>>()?;
    let front = nondominated(&returns)?.into_points();
    Ok(GenerationReport { env_id: env.id().to_string(), with_crl: models.crl.is_some(), snapshots, returns, front, loss_trace, shift_detections })
}
