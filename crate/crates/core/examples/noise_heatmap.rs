//! Cosine-similarity heatmap of predicted noise: models trained on
//! FruitTree, probed with Deep Sea Treasure snapshots at t = T/2.
//!
//! `cargo run --example noise_heatmap [seed]`

use lacadm::harness::{heatmap_experiment, ExperimentConfig, PipelineConfig};
use lacadm::pcn::PcnConfig;

fn main() -> lacadm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let mut pipeline = PipelineConfig { steps: 100, ..Default::default() };
    pipeline.pcn = PcnConfig { sequences: 16, ..Default::default() };
    pipeline.denoiser.steps = 1500;
    pipeline.crl.steps = 800;
    let cfg = ExperimentConfig { pipeline, out_dir: std::env::temp_dir().join("lacadm-heatmap"), ..Default::default() };
    let (summary, with, _) = heatmap_experiment(&cfg, "fruit-tree-d5", "deep-sea-treasure", seed)?;
    println!("{}x{} heatmap at t = {}", with.matrix.len(), with.matrix[0].len(), summary.t);
    println!("mean |cos| with representation {:.5}, without {:.5}", summary.crl_mean_abs, summary.no_crl_mean_abs);
    println!("CSV files under {}", cfg.out_dir.display());
    Ok(())
}
