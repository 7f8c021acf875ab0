//! Hypervolume (exact and Monte-Carlo), sparsity, expected utility and the
//! rank-sum test on small hand-made fronts.
//!
//! `cargo run --example front_metrics`

use lacadm::metrics::{eum, hypervolume, hypervolume_monte_carlo, nondominated, rank_sum_test, sparsity, WeightSet};

fn main() -> lacadm::Result<()> {
    let front = nondominated(&[vec![1.0, 3.0], vec![3.0, 1.0], vec![2.0, 2.0], vec![1.0, 1.0]])?;
    println!("front {:?}", front.points());
    println!("HV exact {}", hypervolume(&front, &[0.0, 0.0])?.value);
    let mc = hypervolume_monte_carlo(front.points(), &[0.0, 0.0], 100_000, 7)?;
    println!("HV Monte-Carlo {:.4} ± {:.4} (99%)", mc.value, mc.ci99);
    println!("sparsity {}", sparsity(&front));
    println!("EUM {:.4}", eum(&front, &WeightSet::default_for(2))?);

    let a = [3.1, 2.9, 3.4, 3.3, 3.0, 3.2, 3.5, 3.1, 3.3, 3.0];
    let b = [2.8, 2.7, 3.0, 2.9, 2.6, 3.1, 2.8, 2.7, 3.0, 2.9];
    let r = rank_sum_test(&a, &b)?;
    println!("rank-sum U {} p {:.4} (exact: {})", r.u, r.p_value, r.exact);
    Ok(())
}
