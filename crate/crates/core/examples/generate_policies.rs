//! End-to-end generation on FruitTree (depth 2): PCN data, schedule fit,
//! representation and denoiser training, guided reverse diffusion, and a
//! comparison of the generated front with the exact one.
//!
//! `cargo run --example generate_policies [seed]`

use lacadm::envs::{enumerate_pareto_front, Env};
use lacadm::harness::{collect, evaluate_front, generate, prepare, train_models, PipelineConfig};
use lacadm::pcn::PcnConfig;

fn main() -> lacadm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let env = Env::builtin("fruit-tree-d2")?;
    let mut cfg = PipelineConfig { steps: 100, ..Default::default() };
    cfg.pcn = PcnConfig { sequences: 16, ..Default::default() };
    cfg.denoiser.steps = 1500;
    cfg.crl.steps = 800;

    let (data, sched) = prepare(&env, &collect(&env, &cfg.pcn, seed)?, &cfg)?;
    let models = train_models(data, sched, &cfg, true, seed)?;
    let report = generate(&env, &models, &cfg.reverse, seed)?;
    let metrics = evaluate_front(&env, "lacadm", seed, &report.returns)?;
    println!("generated front ({} policies sampled):", report.returns.len());
    for p in &report.front {
        println!("    {p:.3?}");
    }
    println!("oracle front:");
    for p in enumerate_pareto_front(&env)?.points() {
        println!("    {p:.3?}");
    }
    println!("HV {:.4}, sparsity {:.4}, EUM {:.4}", metrics.hv, metrics.sparsity, metrics.eum);
    Ok(())
}
