use super::pipeline::TrainedModels;
use crate::crl::latent_table;
use crate::diffusion::{forward_sample_continuous, forward_sample_discrete, PreparedData, ScheduleKind};
use crate::error::{Error, Result};
use crate::rng::RngKey;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// `matrix[i][j]`: cosine of training vector `i` and inference vector `j`.
    pub matrix: Vec<Vec<f64>>,
    pub mean_abs: f64,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        self.matrix.iter().map(|r| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",") + "\n").collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (a.iter().map(|x| x * x).sum::<f64>().sqrt(), b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Pairwise cosine similarities; a zero vector has similarity 0 to
/// everything.
pub fn noise_similarity_heatmap(train: &[Vec<f64>], infer: &[Vec<f64>]) -> Result<Heatmap> {
    let d = train.first().or(infer.first()).map(Vec::len).unwrap_or(0);
    if let Some(v) = train.iter().chain(infer).find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    let mut zero_pairs = 0usize;
    let matrix: Vec<Vec<f64>> = train
        .iter()
        .map(|a| {
            infer
                .iter()
                .map(|b| {
                    cosine(a, b).unwrap_or_else(|| {
                        zero_pairs += 1;
                        0.0
                    })
                })
                .collect()
        })
        .collect();
    if zero_pairs > 0 {
        log::warn!("{zero_pairs} heatmap pairs involve a zero vector; their similarity is 0");
    }
    let n = (train.len() * infer.len()).max(1) as f64;
    let mean_abs = matrix.iter().flatten().map(|v| v.abs()).sum::<f64>() / n;
    Ok(Heatmap { matrix, mean_abs })
}

/// `data` re-shaped to the snapshot width, encoding and objective count of
/// `like`: vectors are truncated or zero-padded.
pub fn reshape_data(data: &PreparedData, like: &PreparedData) -> PreparedData {
    let (width, m) = (like.width(), like.m());
    let fit = |v: &Vec<f64>, n: usize| {
        let mut out: Vec<f64> = v.iter().copied().take(n).collect();
        out.resize(n, 0.0);
        out
    };
    let mut out = data.clone();
    out.snapshots = data.snapshots.iter().map(|s| s.iter().map(|v| fit(v, width)).collect()).collect();
    out.returns = data.returns.iter().map(|s| s.iter().map(|v| fit(v, m)).collect()).collect();
    out.return_scale = fit(&data.return_scale, m);
    out.encoding = like.encoding.clone();
    out
}

/// Noise vectors of `models` at step `t` for `batch` clean snapshots of
/// `data` (cycled in order): the predicted noise (Gaussian) or the residual
/// `x_t - p̂` between the noisy bits and the predicted clean-step
/// probabilities (Bernoulli). Latents come from the clean windows of
/// `data` when the models include a representation, zeros otherwise.
pub fn noise_vectors(models: &TrainedModels, data: &PreparedData, t: usize, batch: usize, key: &RngKey) -> Result<Vec<Vec<f64>>> {
    let den = &models.denoiser;
    if data.width() != den.width || data.kind != den.kind {
        return Err(Error::Mismatch("data does not fit the denoiser".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("no snapshots".into()));
    }
    let table = models.crl.as_ref().map(|c| latent_table(c, data)).transpose()?;
    let mut rng = key.rng();
    (0..batch)
        .map(|b| {
            let i = b % data.len();
            let x0 = &data.snapshots[i][0];
            let z = table.as_ref().map(|tab| tab[i][t.min(data.steps)].clone()).unwrap_or_else(|| vec![0.0; den.latent_dim]);
            Ok(match den.kind {
                ScheduleKind::Gaussian => den.predict(&forward_sample_continuous(x0, t, &models.schedule, &mut rng)?, t, &z)?,
                ScheduleKind::Bernoulli => {
                    let xt = forward_sample_discrete(x0, t, &models.schedule, &mut rng)?;
                    let p = den.predict(&xt, t, &z)?;
                    xt.iter().zip(p).map(|(x, p)| x - p).collect()
                }
            })
        })
        .collect()
}
