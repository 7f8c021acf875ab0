//! Exact Pareto fronts of the tabular environments.
//!
//! [`enumerate_pareto_front`] runs a set-valued backward recursion over
//! (state, steps remaining); [`enumerate_sequences_front`] is an independent
//! brute force over open-loop action sequences, exact whenever the state path
//! does not depend on random outcomes (true for every shipped tabular env).

use super::{fishwood, Env, EnvKind, Outcome, Tabular};
use crate::error::{Error, Result};
use crate::metrics::{nondominated, ParetoFront};

/// Upper bound on `state_count * horizon` for the backward recursion.
pub const MAX_STATE_STEPS: usize = 10_000_000;

// Values from different paths that agree mathematically can differ in the
// last ulp; snapping keeps them from surviving as spurious distinct points.
fn snap(x: f64) -> f64 {
    (x * 1e11).round() / 1e11
}

fn prune(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let snapped: Vec<Vec<f64>> = points.into_iter().map(|p| p.into_iter().map(snap).collect()).collect();
    nondominated(&snapped).expect("finite values of one width").into_points()
}

fn tabular_or_err(env: &Env) -> Result<&dyn Tabular> {
    if env.spec().kind == EnvKind::Continuous {
        return Err(Error::ContinuousEnv(env.id().to_string()));
    }
    Ok(env.tabular().expect("discrete envs are tabular"))
}

/// Nondominated set of expected discounted returns over deterministic
/// policies. Fishwood is restricted to its four stationary policies, whose
/// values have a closed form.
pub fn enumerate_pareto_front(env: &Env) -> Result<ParetoFront> {
    let tab = tabular_or_err(env)?;
    let spec = env.spec();
    if let Some(fw) = env.fishwood() {
        let values: Vec<Vec<f64>> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(w, r)| fw.stationary_value(w, r, spec.gamma, spec.horizon))
            .collect();
        return nondominated(&values);
    }
    let pairs = tab.n_states().saturating_mul(spec.horizon);
    if pairs > MAX_STATE_STEPS {
        return Err(Error::EnvTooLarge(format!("{}: {pairs} state-step pairs", env.id())));
    }
    let m = spec.m;
    let gamma = spec.gamma;
    // sets[s]: front achievable from s with `h` steps remaining.
    let mut sets: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; m]]; tab.n_states()];
    for _ in 0..spec.horizon {
        let mut next_sets = Vec::with_capacity(tab.n_states());
        for s in 0..tab.n_states() {
            if tab.is_terminal(s) {
                next_sets.push(vec![vec![0.0; m]]);
                continue;
            }
            let mut candidates = Vec::new();
            for a in 0..tab.n_actions() {
                candidates.extend(action_front(&tab.outcomes(s, a), &sets, gamma, m));
            }
            next_sets.push(prune(candidates));
        }
        sets = next_sets;
    }
    nondominated(&sets[tab.start()])
}

// Expected-return front of committing to `a` now: a weighted Minkowski sum
// over outcomes of the continuation fronts.
fn action_front(outcomes: &[Outcome], sets: &[Vec<Vec<f64>>], gamma: f64, m: usize) -> Vec<Vec<f64>> {
    let mut acc = vec![vec![0.0; m]];
    for o in outcomes {
        let zero = vec![vec![0.0; m]];
        let cont = if o.terminal { &zero } else { &sets[o.next] };
        let mut sum = Vec::with_capacity(acc.len() * cont.len());
        for base in &acc {
            for c in cont {
                sum.push((0..m).map(|i| base[i] + o.prob * (o.reward[i] + gamma * c[i])).collect());
            }
        }
        acc = prune(sum);
    }
    acc
}

/// Front over all `n_actions^horizon` open-loop action sequences, each
/// evaluated by propagating the exact outcome distribution. Exponential;
/// meant for reduced horizons.
pub fn enumerate_sequences_front(env: &Env, horizon: usize) -> Result<ParetoFront> {
    let tab = tabular_or_err(env)?;
    let n_actions = tab.n_actions();
    let total = (n_actions as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if total > 50_000_000 {
        return Err(Error::EnvTooLarge(format!("{}: {total} action sequences", env.id())));
    }
    let mut values = Vec::with_capacity(total as usize);
    let mut seq = vec![0usize; horizon];
    for _ in 0..total {
        values.push(sequence_value(tab, &seq, env.spec().gamma, env.spec().m));
        // odometer increment
        for digit in seq.iter_mut() {
            *digit += 1;
            if *digit < n_actions {
                break;
            }
            *digit = 0;
        }
    }
    nondominated(&values)
}

fn sequence_value(tab: &dyn Tabular, actions: &[usize], gamma: f64, m: usize) -> Vec<f64> {
    let mut value = vec![0.0; m];
    // (probability, state) of the live branches
    let mut live = vec![(1.0, tab.start())];
    let mut disc = 1.0;
    for &a in actions {
        let mut next_live: Vec<(f64, usize)> = Vec::new();
        for &(p, s) in &live {
            for o in tab.outcomes(s, a) {
                let w = p * o.prob;
                for (v, r) in value.iter_mut().zip(&o.reward) {
                    *v += w * disc * r;
                }
                if !o.terminal && w > 0.0 {
                    match next_live.iter_mut().find(|(_, t)| *t == o.next) {
                        Some(entry) => entry.0 += w,
                        None => next_live.push((w, o.next)),
                    }
                }
            }
        }
        live = next_live;
        disc *= gamma;
        if live.is_empty() {
            break;
        }
    }
    value
}

/// Expected returns of every deterministic stationary policy, by forward
/// propagation of the state distribution; `policy[s]` is the action in `s`.
pub fn stationary_policy_values(env: &Env, horizon: usize) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    let tab = tabular_or_err(env)?;
    let (n, k) = (tab.n_states(), tab.n_actions());
    let count = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > 1_000_000 {
        return Err(Error::EnvTooLarge(format!("{}: {count} stationary policies", env.id())));
    }
    let (gamma, m) = (env.spec().gamma, env.spec().m);
    let mut out = Vec::with_capacity(count as usize);
    let mut policy = vec![0usize; n];
    for _ in 0..count {
        let mut value = vec![0.0; m];
        let mut dist = vec![0.0; n];
        dist[tab.start()] = 1.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let mut next = vec![0.0; n];
            for s in (0..n).filter(|&s| dist[s] > 0.0) {
                for o in tab.outcomes(s, policy[s]) {
                    let w = dist[s] * o.prob;
                    for (v, r) in value.iter_mut().zip(&o.reward) {
                        *v += w * disc * r;
                    }
                    if !o.terminal {
                        next[o.next] += w;
                    }
                }
            }
            dist = next;
            disc *= gamma;
        }
        out.push((policy.clone(), value));
        for digit in policy.iter_mut() {
            *digit += 1;
            if *digit < k {
                break;
            }
            *digit = 0;
        }
    }
    Ok(out)
}

/// Best achievable expected return per objective, each maximized on its own.
pub fn best_per_objective(env: &Env) -> Result<Vec<f64>> {
    scalar_extreme(env, 1.0)
}

/// Per-objective lower bound on achievable returns: the minimum expected
/// return over deterministic policies for tabular envs, the per-step reward
/// floor accumulated over the horizon for continuous ones.
pub fn worst_case_returns(env: &Env) -> Result<Vec<f64>> {
    if env.spec().kind == EnvKind::Continuous {
        let floor = env.reward_floor();
        let (g, h) = (env.spec().gamma, env.spec().horizon as i32);
        let horizon_sum = (1.0 - g.powi(h)) / (1.0 - g);
        return Ok(floor.iter().map(|f| f * horizon_sum).collect());
    }
    if env.fishwood().is_some() {
        let front_and_rest = stationary_policy_values(env, env.spec().horizon)?;
        let m = env.spec().m;
        return Ok((0..m).map(|i| front_and_rest.iter().map(|(_, v)| v[i]).fold(f64::INFINITY, f64::min)).collect());
    }
    Ok(scalar_extreme(env, -1.0)?.into_iter().map(|v| 0.0 - v).collect())
}

// Per objective i, max over deterministic policies of sign * return_i
// (returned as that maximum).
fn scalar_extreme(env: &Env, sign: f64) -> Result<Vec<f64>> {
    let tab = tabular_or_err(env)?;
    let spec = env.spec();
    let mut best = Vec::with_capacity(spec.m);
    for i in 0..spec.m {
        let mut v = vec![0.0; tab.n_states()];
        for _ in 0..spec.horizon {
            v = (0..tab.n_states())
                .map(|s| {
                    if tab.is_terminal(s) {
                        return 0.0;
                    }
                    (0..tab.n_actions())
                        .map(|a| {
                            tab.outcomes(s, a)
                                .iter()
                                .map(|o| o.prob * (sign * o.reward[i] + if o.terminal { 0.0 } else { spec.gamma * v[o.next] }))
                                .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
        }
        best.push(v[tab.start()]);
    }
    Ok(best)
}

/// Closed-form stationary values of Fishwood, exposed for cross-checks.
pub fn fishwood_stationary_values(env: &Env) -> Option<Vec<((usize, usize), Vec<f64>)>> {
    let fw: &fishwood::Fishwood = env.fishwood()?;
    let (g, h) = (env.spec().gamma, env.spec().horizon);
    Some([(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(w, r)| ((w, r), fw.stationary_value(w, r, g, h))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dominates;

    fn no_dominated_pair(front: &ParetoFront) {
        for p in front.points() {
            for q in front.points() {
                assert!(!dominates(p, q));
            }
        }
    }

    #[test]
    fn deep_sea_treasure_front() {
        let env = Env::builtin("deep-sea-treasure").unwrap();
        let front = enumerate_pareto_front(&env).unwrap();
        no_dominated_pair(&front);
        assert_eq!(front.len(), 10);
        let g = env.spec().gamma;
        // (treasure, shortest path length) pairs of the canonical layout
        let expected = [
            (0.7, 1), (8.2, 3), (11.5, 5), (14.0, 7), (15.1, 8),
            (16.1, 9), (19.6, 13), (20.3, 14), (22.4, 17), (23.7, 19),
        ];
        let pts: Vec<Vec<f64>> = expected
            .iter()
            .map(|&(t, k)| vec![t * g.powi(k - 1), -(1.0 - g.powi(k)) / (1.0 - g)])
            .collect();
        assert!(front.approx_eq(&nondominated(&pts).unwrap(), 1e-9));
    }

    #[test]
    fn fruit_tree_d2_front() {
        let env = Env::builtin("fruit-tree-d2").unwrap();
        let front = enumerate_pareto_front(&env).unwrap();
        assert_eq!(front.len(), 3);
        let g = env.spec().gamma;
        let leaf = |a: f64, b: f64| vec![a * g, b * g, 0.0, 0.0, 0.0, 0.0];
        let expected = nondominated(&[leaf(1.0, 0.0), leaf(0.0, 1.0), leaf(0.5, 0.5)]).unwrap();
        assert!(front.approx_eq(&expected, 1e-12));
    }

    #[test]
    fn singleton_front() {
        let mut cfg = crate::envs::EnvConfig::builtin("fruit-tree-d2").unwrap();
        cfg.dynamics = crate::envs::Dynamics::FruitTree {
            depth: 1,
            leaf_seed: "test".into(),
            leaves: vec![vec![1.0, 1.0], vec![0.5, 0.5]],
        };
        cfg.reference_point = vec![-1.0, -1.0];
        cfg.return_scale = vec![1.0, 1.0];
        let env = Env::from_config(&cfg).unwrap();
        assert_eq!(enumerate_pareto_front(&env).unwrap().points(), &[vec![1.0, 1.0]]);
    }

    #[test]
    fn recursion_matches_sequence_enumeration() {
        for (id, h) in [("deep-sea-treasure", 8), ("fruit-tree-d5", 5), ("resource-gathering", 9)] {
            let env = Env::builtin(id).unwrap().with_horizon(h);
            let dp = enumerate_pareto_front(&env).unwrap();
            let brute = enumerate_sequences_front(&env, h).unwrap();
            no_dominated_pair(&dp);
            assert!(dp.approx_eq(&brute, 1e-9), "{id}: {:?} vs {:?}", dp.points(), brute.points());
        }
    }

    #[test]
    fn fishwood_closed_form_matches_propagation() {
        let env = Env::builtin("fishwood").unwrap().with_horizon(12);
        let closed = fishwood_stationary_values(&env).unwrap();
        let simulated = stationary_policy_values(&env, 12).unwrap();
        for ((w, r), v) in closed {
            let (_, sim) = simulated.iter().find(|(p, _)| p[fishwood::WOODS] == w && p[fishwood::RIVER] == r).unwrap();
            for (a, b) in v.iter().zip(sim) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let front = enumerate_pareto_front(&env).unwrap();
        no_dominated_pair(&front);
        assert_eq!(front.len(), 2);
    }

    #[test]
    fn front_reaches_per_objective_optimum() {
        for id in ["deep-sea-treasure", "fruit-tree-d5", "resource-gathering"] {
            let env = Env::builtin(id).unwrap();
            let front = enumerate_pareto_front(&env).unwrap();
            let best = best_per_objective(&env).unwrap();
            for (i, b) in best.iter().enumerate() {
                let top = front.points().iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                assert!((top - b).abs() < 1e-9, "{id} objective {i}: {top} vs {b}");
            }
        }
    }

    #[test]
    fn continuous_rejected() {
        let env = Env::builtin("linear-reservoir").unwrap();
        assert!(matches!(enumerate_pareto_front(&env), Err(Error::ContinuousEnv(_))));
    }
}
