//! Paired comparison of generation with and without the latent
//! representation on FruitTree (depth 5), with a rank-sum test.
//!
//! `cargo run --example crl_ablation [seeds]`

use lacadm::harness::{ablate_crl, ExperimentConfig, Method, PipelineConfig};
use lacadm::pcn::PcnConfig;

fn main() -> lacadm::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let mut pipeline = PipelineConfig { steps: 100, ..Default::default() };
    pipeline.pcn = PcnConfig { sequences: 16, ..Default::default() };
    pipeline.denoiser.steps = 1500;
    pipeline.crl.steps = 800;
    let cfg = ExperimentConfig {
        envs: vec!["fruit-tree-d5".into()],
        seeds: (0..seeds).collect(),
        pipeline,
        out_dir: std::env::temp_dir().join("lacadm-ablation"),
        ..Default::default()
    };
    let table = ablate_crl(&cfg)?;
    print!("{}", table.to_csv());
    if let Some(c) = table.comparison("fruit-tree-d5", Method::LacadmNoCrl) {
        println!("with ≥ without in {}/{} seeds, rank-sum p = {:?}", c.wins, c.pairs, c.p_value);
    }
    Ok(())
}
