use clap::{Parser, Subcommand};
use lacadm::envs::Env;
use lacadm::harness::{
    ablate_crl, assemble_table, collect_dataset, evaluate_front, generate, heatmap_experiment, prepare, run_experiment, train_models, ExperimentConfig,
    ExternalRow, ResultsTable, TrainedModels,
};
use lacadm::reverse::GenerationReport;
use lacadm::store::read_all;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lacadm", version, about = "Latent causal diffusion for multiobjective RL")]
struct Cli {
    /// Experiment config (JSON); defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (output file for `generate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run PCN and store its search sequences.
    Collect {
        #[arg(long)]
        env: String,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Fit the noise schedule of a stored dataset.
    FitSchedule {
        #[arg(long)]
        env: String,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the representation and denoiser on a stored dataset.
    Train {
        #[arg(long)]
        env: String,
        #[arg(long)]
        data: PathBuf,
        /// Train the ablation (no latent representation).
        #[arg(long)]
        no_crl: bool,
    },
    /// Generate policies from a trained checkpoint.
    Generate {
        #[arg(long)]
        env: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Metrics of a generation report, or the full experiment grid when no
    /// report is given.
    Evaluate {
        #[arg(long, requires = "env")]
        report: Option<PathBuf>,
        #[arg(long)]
        env: Option<String>,
    },
    /// Paired comparison with and without the latent representation.
    Ablate,
    /// Noise cosine-similarity heatmaps.
    Heatmap {
        #[arg(long, default_value = "fruit-tree-d5")]
        train_env: String,
        #[arg(long, default_value = "deep-sea-treasure")]
        infer_env: String,
    },
    /// Rebuild the results table from persisted per-seed artifacts.
    Report {
        /// JSON list of externally reported rows to show alongside.
        #[arg(long)]
        external: Option<PathBuf>,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> lacadm::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_table(table: &ResultsTable) {
    print!("{}", table.to_csv());
    for c in &table.comparisons {
        let p = c.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        println!("{}: lacadm >= {} in {}/{} seeds, p = {p}", c.env, c.baseline, c.wins, c.pairs);
    }
    for f in &table.failures {
        println!("FAILED {}/{}/seed {}: {}", f.env, f.stage, f.seed, f.error);
    }
}

/// Success unless some cell failed.
fn table_status(table: &ResultsTable) -> bool {
    print_table(table);
    table.failures.is_empty()
}

fn run(cli: Cli) -> lacadm::Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Collect { env, episodes } => {
            let e = Env::resolve(&env)?;
            let mut pc = cfg.pipeline_for(&env).clone();
            if let Some(n) = episodes {
                pc.pcn.episodes = n;
            }
            let run = collect_dataset(&e, &pc, seed, &out)?;
            let front = run.front(&e, pc.pcn.eval_episodes, seed)?;
            let record = evaluate_front(&e, "pcn", seed, front.points())?;
            write_json(&out.join("pcn-metrics.json"), &record)?;
            println!("{} sequences written to {}; PCN hv = {}", run.sequences.len(), out.display(), record.hv);
        }
        Command::FitSchedule { env, data } => {
            let e = Env::resolve(&env)?;
            let (_, sched) = prepare(&e, &read_all(&data)?, cfg.pipeline_for(&env))?;
            write_json(&out.join("schedule.json"), &sched)?;
            println!("{:?} schedule with {} steps written to {}", sched.kind, sched.steps(), out.display());
        }
        Command::Train { env, data, no_crl } => {
            let e = Env::resolve(&env)?;
            let pc = cfg.pipeline_for(&env);
            let (data, sched) = prepare(&e, &read_all(&data)?, pc)?;
            let models = train_models(data, sched, pc, !no_crl, seed)?;
            write_json(&out.join("models.json"), &models)?;
            println!("final denoiser loss {:?}; checkpoint written to {}", models.denoiser_loss.last(), out.display());
        }
        Command::Generate { env, checkpoint, samples } => {
            let e = Env::resolve(&env)?;
            let models: TrainedModels = serde_json::from_str(&fs::read_to_string(checkpoint.join("models.json"))?)?;
            let mut rc = cfg.pipeline_for(&env).reverse.clone();
            if let Some(n) = samples {
                rc.n_samples = n;
            }
            let report = generate(&e, &models, &rc, seed)?;
            let path = cli.out.unwrap_or_else(|| PathBuf::from("report.json"));
            write_json(&path, &report)?;
            println!("{} front points written to {}", report.front.len(), path.display());
        }
        Command::Evaluate { report: Some(path), env } => {
            let e = Env::resolve(env.as_deref().unwrap_or_default())?;
            let report: GenerationReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
            let method = if report.with_crl { "lacadm" } else { "lacadm_no_crl" };
            let record = evaluate_front(&e, method, seed, &report.returns)?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Evaluate { report: None, .. } => return Ok(table_status(&run_experiment(&cfg)?)),
        Command::Ablate => return Ok(table_status(&ablate_crl(&cfg)?)),
        Command::Heatmap { train_env, infer_env } => {
            let mut wins = 0;
            for &s in &cfg.seeds {
                let (summary, _, _) = heatmap_experiment(&cfg, &train_env, &infer_env, s)?;
                wins += usize::from(summary.crl_mean_abs > summary.no_crl_mean_abs);
                println!("seed {s}: mean |cos| with representation {:.6}, without {:.6}", summary.crl_mean_abs, summary.no_crl_mean_abs);
            }
            println!("higher with representation in {wins}/{} seeds", cfg.seeds.len());
        }
        Command::Report { external } => {
            let failures = match fs::read_to_string(out.join("errors.json")) {
                Ok(s) => serde_json::from_str(&s)?,
                Err(_) => Vec::new(),
            };
            let mut table = assemble_table(&cfg, failures)?;
            if let Some(p) = external {
                let rows: Vec<ExternalRow> = serde_json::from_str(&fs::read_to_string(p)?)?;
                table.external = rows;
            }
            write_json(&out.join("results.json"), &table)?;
            fs::write(out.join("results.csv"), table.to_csv())?;
            let complete = table.rows.iter().all(|r| r.n_seeds == cfg.seeds.len());
            return Ok(table_status(&table) && complete);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
