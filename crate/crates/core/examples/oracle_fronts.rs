//! Exact Pareto fronts of the tabular environments and their hypervolumes.
//!
//! `cargo run --example oracle_fronts`

use lacadm::envs::{enumerate_pareto_front, Env};
use lacadm::metrics::hypervolume;

fn main() -> lacadm::Result<()> {
    for id in ["deep-sea-treasure", "fruit-tree-d2", "fruit-tree-d5", "fishwood", "resource-gathering"] {
        let env = Env::builtin(id)?;
        let front = enumerate_pareto_front(&env)?;
        let hv = hypervolume(&front, &env.spec().reference_point)?;
        println!("{id}: {} points, HV {:.4} (reference {:?})", front.len(), hv.value, env.spec().reference_point);
        for p in front.points().iter().take(4) {
            println!("    {p:.3?}");
        }
        if front.len() > 4 {
            println!("    ...");
        }
    }
    Ok(())
}
