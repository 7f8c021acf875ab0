//! Trains PCN on Deep Sea Treasure, stores its search sequences on disk and
//! reads them back.
//!
//! `cargo run --example pcn_collect [episodes]`

use lacadm::envs::{enumerate_pareto_front, Env};
use lacadm::metrics::hypervolume;
use lacadm::pcn::{train_pcn, PcnConfig};
use lacadm::store::{read_all, read_manifest, write_sequence};

fn main() -> lacadm::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5000);
    let env = Env::builtin("deep-sea-treasure")?;
    let cfg = PcnConfig { episodes, sequences: 4, ..Default::default() };
    let run = train_pcn(&env, &cfg, 0)?;
    let front = run.front(&env, cfg.eval_episodes, 0)?;
    let reference = &env.spec().reference_point;
    println!(
        "PCN after {episodes} episodes: {} points, HV {:.2} (oracle {:.2})",
        front.len(),
        hypervolume(&front, reference)?.value,
        hypervolume(&enumerate_pareto_front(&env)?, reference)?.value
    );

    let dir = std::env::temp_dir().join("lacadm-pcn-collect");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    for seq in &run.sequences {
        write_sequence(&dir, seq)?;
    }
    let back = read_all(&dir)?;
    let manifest = read_manifest(&dir)?.expect("manifest written");
    println!("stored {} sequences of {} snapshots ({} floats each) in {}", back.len(), back[0].len(), manifest.snapshot_len, dir.display());
    Ok(())
}
