//! Fits a Bernoulli noise schedule to FruitTree search sequences and checks
//! one forward corruption against its closed form.
//!
//! `cargo run --example noise_schedule`

use lacadm::diffusion::{fit_schedule, forward_sample_discrete, prepare_sequences};
use lacadm::envs::Env;
use lacadm::pcn::{train_pcn, PcnConfig};
use lacadm::rng::keyed_rng;

fn main() -> lacadm::Result<()> {
    let env = Env::builtin("fruit-tree-d5")?;
    let run = train_pcn(&env, &PcnConfig { sequences: 8, ..Default::default() }, 0)?;
    let data = prepare_sequences(&run.sequences, 100, &env.spec().return_scale)?;
    let sched = fit_schedule(&data)?;
    println!("{:?} schedule, T = {}", sched.kind, sched.steps());
    for t in [1, 25, 50, 75, 100] {
        println!("  t = {t:>3}: beta {:.4}, untouched-bit probability {:.4}", sched.beta_at(t), sched.cumulative_at(t));
    }
    let x0 = &data.snapshots[0][0];
    let mut rng = keyed_rng(0, "example");
    let t = 50;
    let xt = forward_sample_discrete(x0, t, &sched, &mut rng)?;
    let agree = x0.iter().zip(&xt).filter(|(a, b)| a == b).count() as f64 / x0.len() as f64;
    println!("bit agreement at t = {t}: {agree:.3} (expected {:.3})", (1.0 + sched.cumulative_at(t)) / 2.0);
    Ok(())
}
