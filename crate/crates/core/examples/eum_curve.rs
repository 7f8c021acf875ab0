//! Expected utility of the generated front as denoiser training proceeds.
//!
//! `cargo run --example eum_curve [seed]`

use lacadm::harness::{eum_curve, ExperimentConfig, PipelineConfig};
use lacadm::pcn::PcnConfig;

fn main() -> lacadm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let mut pipeline = PipelineConfig { steps: 100, ..Default::default() };
    pipeline.pcn = PcnConfig { sequences: 16, ..Default::default() };
    pipeline.crl.steps = 800;
    let cfg = ExperimentConfig {
        pipeline,
        eum_checkpoints: vec![100, 500, 1000, 1500],
        out_dir: std::env::temp_dir().join("lacadm-eum"),
        ..Default::default()
    };
    for p in eum_curve(&cfg, "fruit-tree-d5", seed)? {
        println!("step {:>5}: EUM {:.4}, HV {:.1}, {} front points", p.step, p.eum, p.hv, p.n_front_points);
    }
    Ok(())
}
