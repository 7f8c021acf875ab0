use super::schedule::{isotonic_nondecreasing, NoiseSchedule, ScheduleKind, BETA_CEIL, BETA_FLOOR};
use crate::error::{Error, Result};
use crate::pcn::{EncodingKind, SearchSequence};
use serde::{Deserialize, Serialize};

/// Per-coordinate affine standardization of continuous snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((z, m), s)| z * s + m).collect()
    }
}

/// Search sequences aligned to diffusion time: `snapshots[i][t]` for
/// `t = 0..=T`, step 0 the converged policy and step `T` the earliest one.
/// Discrete snapshots are one-hot tables, continuous ones standardized;
/// returns are divided by the environment's return scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub kind: ScheduleKind,
    pub env_id: String,
    pub encoding: EncodingKind,
    pub steps: usize,
    pub snapshots: Vec<Vec<Vec<f64>>>,
    pub returns: Vec<Vec<Vec<f64>>>,
    pub standardizer: Option<Standardizer>,
    pub return_scale: Vec<f64>,
}

impl PreparedData {
    pub fn width(&self) -> usize {
        self.encoding.len()
    }

    pub fn m(&self) -> usize {
        self.return_scale.len()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Converged snapshots, one per sequence.
    pub fn x0(&self) -> Vec<Vec<f64>> {
        self.snapshots.iter().map(|s| s[0].clone()).collect()
    }
}

/// Per-row argmax as a one-hot vector (ties to the lowest action).
pub fn binarize_table(table: &[f64], actions: usize) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for (row, dst) in table.chunks(actions).zip(out.chunks_mut(actions)) {
        let mut best = 0;
        for (i, p) in row.iter().enumerate() {
            if *p > row[best] {
                best = i;
            }
        }
        dst[best] = 1.0;
    }
    out
}

/// Inverse of binarization for generated bits: `0.99 / 0.01` smoothing then
/// per-row renormalization.
pub fn bits_to_table(bits: &[f64], actions: usize) -> Vec<f64> {
    let mut out: Vec<f64> = bits.iter().map(|b| 0.99 * b + 0.01 * (1.0 - b)).collect();
    for row in out.chunks_mut(actions) {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    out
}

fn lerp(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
}

/// Reverses and resamples every sequence onto `steps + 1` points.
pub fn prepare_sequences(dataset: &[SearchSequence], steps: usize, return_scale: &[f64]) -> Result<PreparedData> {
    let first = dataset.first().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    if steps < 2 {
        return Err(Error::InvalidArgument("need T >= 2".into()));
    }
    let encoding = first.snapshots.first().ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?.kind.clone();
    let kind = if encoding.is_table() { ScheduleKind::Bernoulli } else { ScheduleKind::Gaussian };
    let mut snapshots = Vec::with_capacity(dataset.len());
    let mut returns = Vec::with_capacity(dataset.len());
    for seq in dataset {
        seq.validate()?;
        if seq.env_id != first.env_id || seq.snapshots.iter().any(|s| s.kind != encoding) {
            return Err(Error::Mismatch("dataset mixes environments or encodings".into()));
        }
        if let Some(r) = seq.returns.iter().find(|r| r.len() != return_scale.len()) {
            return Err(Error::DimensionMismatch { expected: return_scale.len(), got: r.len() });
        }
        let rev: Vec<Vec<f64>> = seq
            .snapshots
            .iter()
            .rev()
            .map(|s| match &encoding {
                EncodingKind::Table { actions, .. } => binarize_table(&s.encoding, *actions),
                EncodingKind::Network { .. } => s.encoding.clone(),
            })
            .collect();
        let rev_ret: Vec<Vec<f64>> =
            seq.returns.iter().rev().map(|r| r.iter().zip(return_scale).map(|(x, s)| x / s).collect()).collect();
        let k = rev.len();
        let mut s_out = Vec::with_capacity(steps + 1);
        let mut r_out = Vec::with_capacity(steps + 1);
        for t in 0..=steps {
            let u = t as f64 * (k - 1) as f64 / steps as f64;
            let (lo, w) = (u.floor() as usize, u - u.floor());
            let hi = (lo + 1).min(k - 1);
            s_out.push(match kind {
                ScheduleKind::Gaussian => lerp(&rev[lo], &rev[hi], w),
                ScheduleKind::Bernoulli => rev[u.round() as usize].clone(),
            });
            r_out.push(lerp(&rev_ret[lo], &rev_ret[hi], w));
        }
        snapshots.push(s_out);
        returns.push(r_out);
    }
    let standardizer = match kind {
        ScheduleKind::Gaussian => {
            let rows: Vec<&[f64]> = snapshots.iter().flatten().map(|v| v.as_slice()).collect();
            let st = Standardizer::fit(&rows);
            for seq in snapshots.iter_mut() {
                for s in seq.iter_mut() {
                    *s = st.apply(s);
                }
            }
            Some(st)
        }
        ScheduleKind::Bernoulli => None,
    };
    Ok(PreparedData {
        kind,
        env_id: first.env_id.clone(),
        encoding,
        steps,
        snapshots,
        returns,
        standardizer,
        return_scale: return_scale.to_vec(),
    })
}

/// Moment-matched per-step noise rates of prepared sequences, clamped and
/// projected onto nondecreasing rates.
///
/// Gaussian: the `beta` at which the pooled residual variance of
/// `x_t - sqrt(1 - beta) x_{t-1}` equals `beta` (unit-variance data), found by
/// bisection. Bernoulli: twice the mean Hamming disagreement of consecutive
/// snapshots, since re-drawing a bit flips it half the time.
pub fn fit_schedule(data: &PreparedData) -> Result<NoiseSchedule> {
    let mut beta = Vec::with_capacity(data.steps);
    for t in 1..=data.steps {
        let pairs = data.snapshots.iter().map(|s| (&s[t - 1], &s[t]));
        let b = match data.kind {
            ScheduleKind::Bernoulli => {
                let (mut diff, mut n) = (0.0, 0usize);
                for (a, b) in pairs {
                    diff += a.iter().zip(b).filter(|(x, y)| x != y).count() as f64;
                    n += a.len();
                }
                2.0 * diff / n.max(1) as f64
            }
            ScheduleKind::Gaussian => {
                let pairs: Vec<_> = pairs.collect();
                let n: usize = pairs.iter().map(|(a, _)| a.len()).sum();
                let residual = |beta: f64| -> f64 {
                    let c = (1.0 - beta).sqrt();
                    let ss: f64 = pairs.iter().flat_map(|(a, b)| a.iter().zip(b.iter()).map(move |(x, y)| (y - c * x).powi(2))).sum();
                    ss / n.max(1) as f64 - beta
                };
                bisect_root(residual, BETA_FLOOR, BETA_CEIL)
            }
        };
        beta.push(b.clamp(BETA_FLOOR, BETA_CEIL));
    }
    if beta.iter().all(|b| *b == BETA_FLOOR) {
        log::warn!("{}: sequences never change; using the minimal schedule", data.env_id);
    }
    let beta = isotonic_nondecreasing(&beta).into_iter().map(|b| b.clamp(BETA_FLOOR, BETA_CEIL)).collect();
    NoiseSchedule::from_betas(data.kind, beta)
}

/// Root of a decreasing-through-zero function on `[lo, hi]`, or the nearer
/// end when there is no sign change.
fn bisect_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if f(a) <= 0.0 {
        return lo;
    }
    if f(b) >= 0.0 {
        return hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if f(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Reverse, resample and fit in one call.
pub fn fit_schedule_from_sequences(dataset: &[SearchSequence], steps: usize, return_scale: &[f64]) -> Result<NoiseSchedule> {
    fit_schedule(&prepare_sequences(dataset, steps, return_scale)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcn::PolicySnapshot;
    use crate::rng::keyed_rng;
    use rand::Rng as _;

    fn table_sequence(rows: Vec<Vec<f64>>, actions: usize) -> SearchSequence {
        let states = rows[0].len() / actions;
        let n = rows.len();
        SearchSequence {
            env_id: "toy".into(),
            seed: 0,
            preference: vec![1.0],
            snapshots: rows
                .into_iter()
                .enumerate()
                .map(|(i, encoding)| PolicySnapshot { step_index: i, env_id: "toy".into(), kind: EncodingKind::Table { states, actions }, encoding })
                .collect(),
            returns: vec![vec![0.0]; n],
            fronts: vec![vec![]; n],
        }
    }

    #[test]
    fn constant_sequence_gets_floor() {
        let seq = table_sequence(vec![vec![0.2, 0.8, 0.6, 0.4]; 5], 2);
        let s = fit_schedule_from_sequences(&[seq], 10, &[1.0]).unwrap();
        assert!(s.beta.iter().all(|b| *b == BETA_FLOOR));
    }

    #[test]
    fn reversal_puts_final_snapshot_first() {
        let seq = table_sequence(vec![vec![0.9, 0.1], vec![0.3, 0.7]], 2);
        let p = prepare_sequences(&[seq], 4, &[1.0]).unwrap();
        assert_eq!(p.snapshots[0][0], vec![0.0, 1.0]);
        assert_eq!(p.snapshots[0][4], vec![1.0, 0.0]);
    }

    #[test]
    fn binarize_and_smooth() {
        assert_eq!(binarize_table(&[0.2, 0.5, 0.3, 0.5, 0.5, 0.0], 3), vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let t = bits_to_table(&[1.0, 0.0, 0.0, 0.0], 2);
        assert!((t[0] - 0.99).abs() < 1e-12 && (t[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flip_rate_estimator() {
        // every row flips its argmax with probability f at each step
        let (states, steps, f) = (400, 20, 0.05);
        let mut rng = keyed_rng(4, "t");
        let mut row_bits: Vec<bool> = (0..states).map(|_| rng.random()).collect();
        let mut tables = Vec::new();
        for _ in 0..=steps {
            tables.push(row_bits.iter().flat_map(|b| if *b { [0.0, 1.0] } else { [1.0, 0.0] }).collect());
            for b in row_bits.iter_mut() {
                if rng.random::<f64>() < f {
                    *b = !*b;
                }
            }
        }
        let p = prepare_sequences(&[table_sequence(tables, 2)], steps, &[1.0]).unwrap();
        // two bits change per flipped row out of two bits per row
        let raw: Vec<f64> = (1..=steps)
            .map(|t| {
                let (a, b) = (&p.snapshots[0][t - 1], &p.snapshots[0][t]);
                2.0 * a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
            })
            .collect();
        let mean = raw.iter().sum::<f64>() / steps as f64;
        let sigma = 2.0 * (f * (1.0 - f) / (states * steps) as f64).sqrt();
        assert!((mean - 2.0 * f).abs() < 3.0 * sigma, "mean {mean}");
        let s = fit_schedule(&p).unwrap();
        let fitted = s.beta.iter().sum::<f64>() / steps as f64;
        assert!((fitted - mean).abs() < 1e-12);
    }

    #[test]
    fn gaussian_refit_recovers_linear_schedule() {
        use crate::diffusion::schedule::{forward_step_continuous, make_schedule, ScheduleShape};
        use crate::nn::Activation;
        let truth = make_schedule(ScheduleKind::Gaussian, 100, 1e-3, 0.05, ScheduleShape::Linear).unwrap();
        let kind = EncodingKind::Network { widths: vec![4, 4], activations: vec![Activation::Identity], command_width: 0 };
        let mut rng = keyed_rng(5, "refit");
        let seqs: Vec<SearchSequence> = (0..50)
            .map(|i| {
                let mut x: Vec<f64> = (0..kind.len()).map(|_| super::super::schedule::normal(&mut rng)).collect();
                let mut chain = vec![x.clone()];
                for t in 1..=100 {
                    x = forward_step_continuous(&x, t, &truth, &mut rng).unwrap();
                    chain.push(x.clone());
                }
                // training order runs from the noisiest snapshot to the clean one
                chain.reverse();
                SearchSequence {
                    env_id: "toy".into(),
                    seed: i,
                    preference: vec![1.0],
                    snapshots: chain
                        .into_iter()
                        .enumerate()
                        .map(|(j, encoding)| PolicySnapshot { step_index: j, env_id: "toy".into(), kind: kind.clone(), encoding })
                        .collect(),
                    returns: vec![vec![0.0]; 101],
                    fronts: vec![vec![]; 101],
                }
            })
            .collect();
        let fitted = fit_schedule_from_sequences(&seqs, 100, &[1.0]).unwrap();
        for t in 34..=67 {
            let rel = (fitted.beta_at(t) - truth.beta_at(t)).abs() / truth.beta_at(t);
            assert!(rel <= 0.2, "t={t}: {} vs {}", fitted.beta_at(t), truth.beta_at(t));
        }
    }
}
