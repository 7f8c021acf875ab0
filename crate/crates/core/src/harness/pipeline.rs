use crate::crl::{latent_table, train_crl, CrlConfig, CrlModel};
use crate::diffusion::{fit_schedule, prepare_sequences, train_denoiser_checkpoints, Denoiser, DenoiserConfig, NoiseSchedule, PreparedData, TrainingSet};
use crate::envs::Env;
use crate::error::Result;
use crate::metrics::{eum, hypervolume, nondominated, sparsity, MetricRecord, WeightSet};
use crate::pcn::{train_pcn, PcnConfig, SearchSequence};
use crate::reverse::{generate_policies, GenerationReport, Models, ReverseConfig};
use crate::rng::RngKey;
use serde::{Deserialize, Serialize};

/// Settings of every stage from data collection to generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub pcn: PcnConfig,
    /// Diffusion steps `T`.
    pub steps: usize,
    pub crl: CrlConfig,
    pub denoiser: DenoiserConfig,
    pub reverse: ReverseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { pcn: PcnConfig::default(), steps: 1500, crl: CrlConfig::default(), denoiser: DenoiserConfig::default(), reverse: ReverseConfig::default() }
    }
}

/// Everything generation needs; `crl` is absent for the ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub data: PreparedData,
    pub schedule: NoiseSchedule,
    pub crl: Option<CrlModel>,
    pub denoiser: Denoiser,
    pub crl_loss: Vec<f64>,
    pub denoiser_loss: Vec<f64>,
}

impl TrainedModels {
    pub fn with_crl(&self) -> bool {
        self.crl.is_some()
    }
}

/// Search sequences of one PCN run.
pub fn collect(env: &Env, config: &PcnConfig, seed: u64) -> Result<Vec<SearchSequence>> {
    Ok(train_pcn(env, config, seed)?.sequences)
}

/// Aligned data and fitted schedule, shared by both variants of a seed.
pub fn prepare(env: &Env, sequences: &[SearchSequence], config: &PipelineConfig) -> Result<(PreparedData, NoiseSchedule)> {
    let data = prepare_sequences(sequences, config.steps, &env.spec().return_scale)?;
    let schedule = fit_schedule(&data)?;
    Ok((data, schedule))
}

/// Trains the representation (unless `with_crl` is false) and the denoiser.
/// Both variants draw the denoiser from the same key, so they differ only
/// in the latent inputs.
pub fn train_models(data: PreparedData, schedule: NoiseSchedule, config: &PipelineConfig, with_crl: bool, seed: u64) -> Result<TrainedModels> {
    let mut models = train_models_checkpoints(data, schedule, config, with_crl, seed, &[config.denoiser.steps])?;
    Ok(models.pop().expect("one checkpoint"))
}

/// As [`train_models`], with one entry per denoiser-training checkpoint.
pub fn train_models_checkpoints(
    data: PreparedData,
    schedule: NoiseSchedule,
    config: &PipelineConfig,
    with_crl: bool,
    seed: u64,
    checkpoints: &[usize],
) -> Result<Vec<TrainedModels>> {
    let key = RngKey::new(seed, format!("lacadm/{}", data.env_id));
    let (crl, crl_loss) = if with_crl {
        let (model, trace) = train_crl(&data, &config.crl, &key.child("crl"))?;
        (Some(model), trace)
    } else {
        (None, Vec::new())
    };
    let latents = crl.as_ref().map(|m| latent_table(m, &data)).transpose()?;
    let x0 = data.x0();
    let set = TrainingSet { x0: &x0, latents: latents.as_deref(), latent_dim: config.crl.latent_dim };
    let (dens, denoiser_loss) = train_denoiser_checkpoints(&set, &schedule, &config.denoiser, &key.child("denoiser"), checkpoints)?;
    Ok(dens
        .into_iter()
        .map(|denoiser| TrainedModels {
            data: data.clone(),
            schedule: schedule.clone(),
            crl: crl.clone(),
            denoiser,
            crl_loss: crl_loss.clone(),
            denoiser_loss: denoiser_loss.clone(),
        })
        .collect())
}

pub fn generate(env: &Env, models: &TrainedModels, config: &ReverseConfig, seed: u64) -> Result<GenerationReport> {
    let m = Models { denoiser: &models.denoiser, crl: models.crl.as_ref(), data: &models.data };
    generate_policies(env, &m, &models.schedule, config, &RngKey::new(seed, format!("generate/{}", env.id())))
}

/// HV, sparsity and EUM of a set of returns.
pub fn evaluate_front(env: &Env, method: &str, seed: u64, returns: &[Vec<f64>]) -> Result<MetricRecord> {
    let spec = env.spec();
    let front = nondominated(returns)?;
    let hv = hypervolume(&front, &spec.reference_point)?.value;
    let eum = if front.is_empty() { 0.0 } else { eum(&front, &WeightSet::default_for(spec.m))? };
    Ok(MetricRecord { env: spec.id.clone(), method: method.into(), seed, hv, sparsity: sparsity(&front), eum, n_front_points: front.len() })
}
