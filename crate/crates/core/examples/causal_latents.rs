//! Learns the latent causal representation of FruitTree search sequences and
//! probes the shift detector with a perturbed latent.
//!
//! `cargo run --example causal_latents`

use lacadm::crl::{detect_shift, latent_table, train_crl, CrlConfig};
use lacadm::diffusion::prepare_sequences;
use lacadm::envs::Env;
use lacadm::pcn::{train_pcn, PcnConfig};
use lacadm::rng::RngKey;

fn main() -> lacadm::Result<()> {
    let env = Env::builtin("fruit-tree-d2")?;
    let run = train_pcn(&env, &PcnConfig { sequences: 8, ..Default::default() }, 0)?;
    let data = prepare_sequences(&run.sequences, 50, &env.spec().return_scale)?;
    let cfg = CrlConfig { steps: 500, ..Default::default() };
    let (model, trace) = train_crl(&data, &cfg, &RngKey::new(0, "example/crl"))?;
    println!("joint loss {:.4} -> {:.4} over {} steps", trace[0], trace[trace.len() - 1], trace.len());

    let z = latent_table(&model, &data)?;
    let t = 10;
    let lags: Vec<Vec<f64>> = (1..=model.lags()).map(|l| z[0][t + l].clone()).collect();
    let residual = model.residual(&z[0][t], &lags)?;
    let predicted: Vec<f64> = z[0][t].iter().zip(&residual).map(|(a, r)| a - r).collect();
    let on_model = detect_shift(&z[0][t], &predicted, &model.flow, model.shift_threshold)?;
    let shifted: Vec<f64> = z[0][t].iter().map(|v| v + 10.0).collect();
    let off_model = detect_shift(&shifted, &predicted, &model.flow, model.shift_threshold)?;
    println!("shift detected on the recorded latent: {}", on_model.is_some());
    println!("shift detected after a +10 perturbation: {}", off_model.is_some());
    Ok(())
}
