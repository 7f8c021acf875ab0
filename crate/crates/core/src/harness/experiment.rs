use super::heatmap::{noise_similarity_heatmap, noise_vectors, reshape_data, Heatmap};
use super::pipeline::{evaluate_front, generate, prepare, train_models, train_models_checkpoints, PipelineConfig};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::metrics::{eum, hypervolume, nondominated, rank_sum_test, MetricRecord, WeightSet};
use crate::pcn::{train_pcn, SearchSequence};
use crate::rng::RngKey;
use crate::store::{read_all, write_sequence};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lacadm,
    LacadmNoCrl,
    Pcn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lacadm, Method::LacadmNoCrl, Method::Pcn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lacadm => "lacadm",
            Method::LacadmNoCrl => "lacadm_no_crl",
            Method::Pcn => "pcn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Builtin ids or paths to environment configs.
    pub envs: Vec<String>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub pipeline: PipelineConfig,
    /// Per-environment replacements of `pipeline`, keyed like `envs`.
    pub overrides: BTreeMap<String, PipelineConfig>,
    /// Vectors per side of the noise-similarity heatmap.
    pub heatmap_batch: usize,
    /// Denoiser step counts at which the EUM curve is evaluated.
    pub eum_checkpoints: Vec<usize>,
    pub out_dir: PathBuf,
    /// Cells run concurrently; 0 uses every core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            envs: vec!["fruit-tree-d5".into(), "fishwood".into(), "deep-sea-treasure".into()],
            methods: Method::ALL.to_vec(),
            seeds: (0..10).collect(),
            pipeline: PipelineConfig::default(),
            overrides: BTreeMap::new(),
            heatmap_batch: 64,
            eum_checkpoints: vec![500, 1000, 1500, 2000, 2500, 3000],
            out_dir: PathBuf::from("results"),
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn pipeline_for(&self, env: &str) -> &PipelineConfig {
        self.overrides.get(env).unwrap_or(&self.pipeline)
    }

    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one env, method and seed".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidArgument("duplicate seeds".into()));
        }
        for e in &self.envs {
            Env::resolve(e)?;
        }
        if let Some(k) = self.overrides.keys().find(|k| !self.envs.contains(k)) {
            return Err(Error::InvalidArgument(format!("override for unconfigured env `{k}`")));
        }
        for e in &self.envs {
            let p = self.pipeline_for(e);
            p.pcn.validate()?;
            p.reverse.validate()?;
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new().num_threads(self.workers).build().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Aggregate over the seeds of one (env, method) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub env: String,
    pub method: Method,
    pub n_seeds: usize,
    pub mean_hv: f64,
    pub mean_sparsity: f64,
    pub mean_eum: f64,
    /// Rank-sum p-value of the HVs against the best baseline: `pcn` for
    /// the `lacadm` row, `lacadm` for every other row. Absent with fewer
    /// than two seeds on either side.
    pub p_value: Option<f64>,
}

/// Paired-seed HV comparison of `lacadm` against another method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub env: String,
    pub baseline: Method,
    /// Seeds where `lacadm` has HV at least the baseline's.
    pub wins: usize,
    pub pairs: usize,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub env: String,
    /// `collect` or a method name.
    pub stage: String,
    pub seed: u64,
    pub error: String,
}

/// Externally reported numbers shown next to the in-repo methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalRow {
    pub env: String,
    pub method: String,
    pub hv: Option<f64>,
    pub sparsity: Option<f64>,
    pub source: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub comparisons: Vec<Comparison>,
    pub failures: Vec<CellFailure>,
    #[serde(default)]
    pub external: Vec<ExternalRow>,
}

impl ResultsTable {
    pub fn row(&self, env: &str, method: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.env == env && r.method == method)
    }

    pub fn comparison(&self, env: &str, baseline: Method) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.env == env && c.baseline == baseline)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("env,method,n_seeds,mean_hv,mean_sparsity,mean_eum,p_value\n");
        for r in &self.rows {
            let p = r.p_value.map(|p| p.to_string()).unwrap_or_default();
            s += &format!("{},{},{},{},{},{},{}\n", r.env, r.method, r.n_seeds, r.mean_hv, r.mean_sparsity, r.mean_eum, p);
        }
        s
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn dataset_dir(out: &Path, env_id: &str, seed: u64) -> PathBuf {
    out.join(env_id).join(format!("seed-{seed}")).join("dataset")
}

pub fn cell_dir(out: &Path, env_id: &str, method: Method, seed: u64) -> PathBuf {
    out.join(env_id).join(method.as_str()).join(format!("seed-{seed}"))
}

/// Runs PCN and stores its search sequences in `dir`, replacing any
/// previous dataset there.
pub fn collect_dataset(env: &Env, config: &PipelineConfig, seed: u64, dir: &Path) -> Result<crate::pcn::PcnRun> {
    let run = train_pcn(env, &config.pcn, seed)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    for seq in &run.sequences {
        write_sequence(dir, seq)?;
    }
    Ok(run)
}

fn persist_metrics(dir: &Path, record: &MetricRecord, front: &[Vec<f64>]) -> Result<()> {
    write_json(&dir.join("metrics.json"), record)?;
    write_json(&dir.join("front.json"), &front)
}

fn collect_cell(cfg: &ExperimentConfig, env_key: &str, seed: u64) -> Result<()> {
    let env = Env::resolve(env_key)?;
    let run = collect_dataset(&env, cfg.pipeline_for(env_key), seed, &dataset_dir(&cfg.out_dir, env.id(), seed))?;
    if cfg.methods.contains(&Method::Pcn) {
        let front = run.front(&env, cfg.pipeline_for(env_key).pcn.eval_episodes, seed)?;
        let record = evaluate_front(&env, Method::Pcn.as_str(), seed, front.points())?;
        persist_metrics(&cell_dir(&cfg.out_dir, env.id(), Method::Pcn, seed), &record, front.points())?;
    }
    Ok(())
}

fn generation_cell(cfg: &ExperimentConfig, env_key: &str, method: Method, seed: u64) -> Result<()> {
    let env = Env::resolve(env_key)?;
    let pc = cfg.pipeline_for(env_key);
    let seqs: Vec<SearchSequence> = read_all(dataset_dir(&cfg.out_dir, env.id(), seed))?;
    let (data, sched) = prepare(&env, &seqs, pc)?;
    let models = train_models(data, sched, pc, method == Method::Lacadm, seed)?;
    let report = generate(&env, &models, &pc.reverse, seed)?;
    let record = evaluate_front(&env, method.as_str(), seed, &report.returns)?;
    let dir = cell_dir(&cfg.out_dir, env.id(), method, seed);
    write_json(&dir.join("generation.json"), &report)?;
    persist_metrics(&dir, &record, &report.front)
}

/// Runs every (env, method, seed) cell, persists per-cell artifacts and
/// assembles the table from them.
///
/// A failing cell does not stop the others: its error is listed in the
/// table and in `errors.json`. Only configuration and table-level IO
/// errors are returned as `Err`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let pool = cfg.pool()?;
    let fail = |env: &str, stage: &str, seed: u64, e: Error| {
        log::error!("{env}/{stage}/seed {seed}: {e}");
        CellFailure { env: env.into(), stage: stage.into(), seed, error: e.to_string() }
    };

    let collect_cells: Vec<(&String, u64)> = cfg.envs.iter().flat_map(|e| cfg.seeds.iter().map(move |&s| (e, s))).collect();
    let collected: Vec<Option<CellFailure>> =
        pool.install(|| collect_cells.par_iter().map(|&(e, s)| collect_cell(cfg, e, s).err().map(|err| fail(e, "collect", s, err))).collect());
    let mut failures: Vec<CellFailure> = collected.into_iter().flatten().collect();

    let gen_cells: Vec<(&String, Method, u64)> = cfg
        .envs
        .iter()
        .flat_map(|e| cfg.methods.iter().filter(|m| **m != Method::Pcn).flat_map(move |&m| cfg.seeds.iter().map(move |&s| (e, m, s))))
        .filter(|(e, _, s)| !failures.iter().any(|f| &f.env == *e && f.seed == *s))
        .collect();
    let generated: Vec<Option<CellFailure>> = pool.install(|| {
        gen_cells.par_iter().map(|&(e, m, s)| generation_cell(cfg, e, m, s).err().map(|err| fail(e, m.as_str(), s, err))).collect()
    });
    failures.extend(generated.into_iter().flatten());

    let table = assemble_table(cfg, failures)?;
    write_json(&cfg.out_dir.join("results.json"), &table)?;
    fs::write(cfg.out_dir.join("results.csv"), table.to_csv())?;
    write_json(&cfg.out_dir.join("errors.json"), &table.failures)?;
    Ok(table)
}

/// Paired HV comparison of both variants; identical to [`run_experiment`]
/// restricted to `lacadm` and `lacadm_no_crl`.
pub fn ablate_crl(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment(&ExperimentConfig { methods: vec![Method::Lacadm, Method::LacadmNoCrl], ..cfg.clone() })
}

fn p_value(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() < 2 || b.len() < 2 {
        return Ok(None);
    }
    Ok(Some(rank_sum_test(a, b)?.p_value))
}

/// Rebuilds the table from the per-cell `metrics.json` files under
/// `cfg.out_dir`. Cells without a record are left out of the means.
pub fn assemble_table(cfg: &ExperimentConfig, failures: Vec<CellFailure>) -> Result<ResultsTable> {
    let mut table = ResultsTable { failures, ..Default::default() };
    for key in &cfg.envs {
        let env_id = Env::resolve(key)?.id().to_string();
        let mut records: BTreeMap<Method, BTreeMap<u64, MetricRecord>> = BTreeMap::new();
        for &m in &cfg.methods {
            let per_seed = records.entry(m).or_default();
            for &s in &cfg.seeds {
                let path = cell_dir(&cfg.out_dir, &env_id, m, s).join("metrics.json");
                if path.is_file() {
                    per_seed.insert(s, read_json(&path)?);
                }
            }
        }
        let hvs = |m: Method| -> Vec<f64> { records.get(&m).map(|r| r.values().map(|x| x.hv).collect()).unwrap_or_default() };
        for &m in &cfg.methods {
            let recs = &records[&m];
            let n = recs.len();
            let mean = |f: fn(&MetricRecord) -> f64| if n == 0 { f64::NAN } else { recs.values().map(f).sum::<f64>() / n as f64 };
            let baseline = if m == Method::Lacadm { Method::Pcn } else { Method::Lacadm };
            let p = if cfg.methods.contains(&baseline) { p_value(&hvs(Method::Lacadm), &hvs(if m == Method::Lacadm { Method::Pcn } else { m }))? } else { None };
            table.rows.push(ResultRow {
                env: env_id.clone(),
                method: m,
                n_seeds: n,
                mean_hv: mean(|r| r.hv),
                mean_sparsity: mean(|r| r.sparsity),
                mean_eum: mean(|r| r.eum),
                p_value: p,
            });
        }
        if let Some(ours) = records.get(&Method::Lacadm) {
            for &m in cfg.methods.iter().filter(|m| **m != Method::Lacadm) {
                let theirs = &records[&m];
                let paired: Vec<(f64, f64)> = ours.iter().filter_map(|(s, r)| theirs.get(s).map(|t| (r.hv, t.hv))).collect();
                table.comparisons.push(Comparison {
                    env: env_id.clone(),
                    baseline: m,
                    wins: paired.iter().filter(|(a, b)| a >= b).count(),
                    pairs: paired.len(),
                    p_value: p_value(&hvs(Method::Lacadm), &hvs(m))?,
                });
            }
        }
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EumPoint {
    pub step: usize,
    pub eum: f64,
    pub hv: f64,
    pub n_front_points: usize,
}

/// EUM of the generated front after each denoiser-training checkpoint, for
/// one seed. Writes `curve.csv` and `fronts.json` under
/// `<out>/<env>/eum-curve/seed-<s>/`.
pub fn eum_curve(cfg: &ExperimentConfig, env_key: &str, seed: u64) -> Result<Vec<EumPoint>> {
    if cfg.eum_checkpoints.is_empty() {
        return Err(Error::InvalidArgument("no EUM checkpoints configured".into()));
    }
    let env = Env::resolve(env_key)?;
    let pc = cfg.pipeline_for(env_key);
    let dir = cfg.out_dir.join(env.id()).join("eum-curve").join(format!("seed-{seed}"));
    collect_dataset(&env, pc, seed, &dir.join("dataset"))?;
    let (data, sched) = prepare(&env, &read_all(dir.join("dataset"))?, pc)?;
    let mut pc_long = pc.clone();
    pc_long.denoiser.steps = pc.denoiser.steps.max(*cfg.eum_checkpoints.last().unwrap());
    let checkpoints = train_models_checkpoints(data, sched, &pc_long, true, seed, &cfg.eum_checkpoints)?;
    let weights = WeightSet::default_for(env.spec().m);
    let mut points = Vec::new();
    let mut fronts = Vec::new();
    for (&step, models) in cfg.eum_checkpoints.iter().zip(&checkpoints) {
        let report = generate(&env, models, &pc.reverse, seed)?;
        let front = nondominated(&report.returns)?;
        let e = if front.is_empty() { 0.0 } else { eum(&front, &weights)? };
        let hv = hypervolume(&front, &env.spec().reference_point)?.value;
        points.push(EumPoint { step, eum: e, hv, n_front_points: front.len() });
        fronts.push(front.into_points());
    }
    let mut csv = String::from("step,eum,hv,n_front_points\n");
    for p in &points {
        csv += &format!("{},{},{},{}\n", p.step, p.eum, p.hv, p.n_front_points);
    }
    fs::write(dir.join("curve.csv"), csv)?;
    write_json(&dir.join("fronts.json"), &fronts)?;
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSummary {
    pub train_env: String,
    pub infer_env: String,
    pub seed: u64,
    pub t: usize,
    pub batch: usize,
    pub crl_mean_abs: f64,
    pub no_crl_mean_abs: f64,
}

/// Noise-similarity heatmaps of models trained on `train_env`, probed with
/// snapshots of `infer_env` (re-shaped to the training width) at `t = T/2`,
/// with and without the latent representation. Writes `crl.csv`,
/// `no_crl.csv` and `summary.json` under `<out>/heatmap/<train>__<infer>/seed-<s>/`.
pub fn heatmap_experiment(cfg: &ExperimentConfig, train_env: &str, infer_env: &str, seed: u64) -> Result<(HeatmapSummary, Heatmap, Heatmap)> {
    let (tenv, ienv) = (Env::resolve(train_env)?, Env::resolve(infer_env)?);
    let pc = cfg.pipeline_for(train_env);
    let dir = cfg.out_dir.join("heatmap").join(format!("{}__{}", tenv.id(), ienv.id())).join(format!("seed-{seed}"));
    collect_dataset(&tenv, pc, seed, &dir.join("train-dataset"))?;
    let (data, sched) = prepare(&tenv, &read_all(dir.join("train-dataset"))?, pc)?;
    let ipc = PipelineConfig { steps: pc.steps, ..cfg.pipeline_for(infer_env).clone() };
    collect_dataset(&ienv, &ipc, seed, &dir.join("infer-dataset"))?;
    let (idata, _) = prepare(&ienv, &read_all(dir.join("infer-dataset"))?, &ipc)?;
    let infer = reshape_data(&idata, &data);
    let t = (pc.steps / 2).max(1);
    let key = RngKey::new(seed, "heatmap");
    let mut maps = Vec::new();
    for with_crl in [true, false] {
        let models = train_models(data.clone(), sched.clone(), pc, with_crl, seed)?;
        let a = noise_vectors(&models, &data, t, cfg.heatmap_batch, &key.child("train"))?;
        let b = noise_vectors(&models, &infer, t, cfg.heatmap_batch, &key.child("infer"))?;
        maps.push(noise_similarity_heatmap(&a, &b)?);
    }
    let no_crl = maps.pop().unwrap();
    let crl = maps.pop().unwrap();
    let summary = HeatmapSummary {
        train_env: tenv.id().into(),
        infer_env: ienv.id().into(),
        seed,
        t,
        batch: cfg.heatmap_batch,
        crl_mean_abs: crl.mean_abs,
        no_crl_mean_abs: no_crl.mean_abs,
    };
    fs::write(dir.join("crl.csv"), crl.to_csv())?;
    fs::write(dir.join("no_crl.csv"), no_crl.to_csv())?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((summary, crl, no_crl))
}
