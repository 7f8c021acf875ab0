use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Per-side sample size up to which the exact permutation distribution is used.
pub const EXACT_MAX_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Two-sided p-value.
    pub p_value: f64,
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample, doubled so they are integers.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).unwrap());
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        // positions i..=j share the rank ((i+1)+(j+1))/2
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test.
///
/// Exact permutation distribution (ties handled through midranks) when both
/// samples have at most [`EXACT_MAX_N`] values; otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("rank-sum test needs at least two values per sample".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rank-sum sample".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let w2: u64 = ranks[..n1].iter().sum();
    let u = w2 as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;

    if pooled.iter().all(|x| *x == pooled[0]) {
        return Ok(RankSumResult { p_value: 1.0, u, exact: n1 <= EXACT_MAX_N && n2 <= EXACT_MAX_N });
    }

    if n1 <= EXACT_MAX_N && n2 <= EXACT_MAX_N {
        // counts[k][s]: subsets of size k whose doubled rank sum is s.
        let max_sum: usize = ranks.iter().sum::<u64>() as usize;
        let mut counts = vec![vec![0f64; max_sum + 1]; n1 + 1];
        counts[0][0] = 1.0;
        for &r in &ranks {
            let r = r as usize;
            for k in (1..=n1).rev() {
                for s in (r..=max_sum).rev() {
                    let c = counts[k - 1][s - r];
                    if c != 0.0 {
                        counts[k][s] += c;
                    }
                }
            }
        }
        let total: f64 = counts[n1].iter().sum();
        // Mean of the doubled statistic is n1 * (n + 1).
        let mean2 = (n1 * (n + 1)) as i64;
        let obs = (w2 as i64 - mean2).abs();
        let extreme: f64 = counts[n1]
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - mean2).abs() >= obs)
            .map(|(_, c)| *c)
            .sum();
        return Ok(RankSumResult { p_value: (extreme / total).min(1.0), u, exact: true });
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let mut sorted = pooled.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(RankSumResult { p_value: 1.0, u, exact: false });
    }
    let dev = ((u - n1f * n2f / 2.0).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0);
    Ok(RankSumResult { p_value: p, u, exact: false })
}
