use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Graph, Mat, Mlp, MlpVars, Var};
use crate::rng::{Rng, RngKey};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub(crate) fn concat_all(g: &mut Graph, parts: &[Var]) -> Var {
    let mut out = parts[0];
    for p in &parts[1..] {
        out = g.concat_cols(out, *p);
    }
    out
}

pub(crate) fn normal_mat(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
}

/// Lag-`L` latent transition: coordinate `i` of `z_t` is `f_i(lags, eps_i)`
/// where `lags` stacks `z_{t-1}, …, z_{t-L}` (most recent first) and every
/// `f_i` reads the whole window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentDynamics {
    pub nets: Vec<Mlp>,
    pub latent_dim: usize,
    pub lags: usize,
}

impl LatentDynamics {
    pub fn new(latent_dim: usize, lags: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut widths = vec![latent_dim * lags + 1];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let nets = (0..latent_dim).map(|_| Mlp::new(&widths, Activation::Tanh, Activation::Identity, rng)).collect::<Result<_>>()?;
        Ok(Self { nets, latent_dim, lags })
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Mlp::param_count).sum()
    }

    pub fn predict(&self, lags: &[Vec<f64>], eps: &[f64]) -> Result<Vec<f64>> {
        if lags.len() != self.lags {
            return Err(Error::DimensionMismatch { expected: self.lags, got: lags.len() });
        }
        if eps.len() != self.latent_dim {
            return Err(Error::DimensionMismatch { expected: self.latent_dim, got: eps.len() });
        }
        let mut input: Vec<f64> = Vec::with_capacity(self.latent_dim * self.lags + 1);
        for z in lags {
            if z.len() != self.latent_dim {
                return Err(Error::DimensionMismatch { expected: self.latent_dim, got: z.len() });
            }
            input.extend_from_slice(z);
        }
        input.push(0.0);
        let mut out = Vec::with_capacity(self.latent_dim);
        for (net, e) in self.nets.iter().zip(eps) {
            *input.last_mut().unwrap() = *e;
            out.push(net.forward(&input)?[0]);
        }
        Ok(out)
    }

    pub(crate) fn vars(&self, g: &mut Graph) -> Vec<MlpVars> {
        self.nets.iter().map(|n| n.vars(g)).collect()
    }

    /// `lags` is `B × (L k)`, `eps` is `B × k`; returns `B × k`.
    pub(crate) fn apply(&self, g: &mut Graph, vars: &[MlpVars], lags: Var, eps: &Mat) -> Var {
        let b = eps.rows;
        let outs: Vec<Var> = self
            .nets
            .iter()
            .zip(vars)
            .enumerate()
            .map(|(i, (net, v))| {
                let col = g.leaf(Mat::from_vec(b, 1, (0..b).map(|r| eps.data[r * eps.cols + i]).collect()));
                let input = g.concat_cols(lags, col);
                net.apply(g, v, input)
            })
            .collect();
        concat_all(g, &outs)
    }

    pub(crate) fn gradient(&self, g: &Graph, vars: &[MlpVars]) -> Vec<f64> {
        self.nets.iter().zip(vars).flat_map(|(n, v)| n.gradient(g, v)).collect()
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.nets.iter_mut().map(|n| n.params_mut())
    }

    /// Fits the transition on observed latent sequences (`seqs[n][t]`, in
    /// time order) with standard-normal noise inputs.
    pub fn fit(seqs: &[Vec<Vec<f64>>], lags: usize, hidden: &[usize], steps: usize, batch: usize, lr: f64, key: &RngKey) -> Result<(Self, Vec<f64>)> {
        let k = seqs.first().and_then(|s| s.first()).map(Vec::len).ok_or_else(|| Error::InvalidArgument("no latent sequences".into()))?;
        let samples: Vec<(usize, usize)> =
            seqs.iter().enumerate().flat_map(|(n, s)| (lags..s.len()).map(move |t| (n, t))).collect();
        if samples.is_empty() {
            return Err(Error::InvalidArgument("sequences shorter than the lag window".into()));
        }
        let mut dynamics = Self::new(k, lags, hidden, &mut key.child("init").rng())?;
        let mut adam = Adam::new(dynamics.param_count(), lr);
        let mut rng = key.child("batches").rng();
        let mut trace = Vec::with_capacity(steps);
        for _ in 0..steps {
            let picks: Vec<(usize, usize)> = (0..batch).map(|_| samples[rng.random_range(0..samples.len())]).collect();
            let lag_rows: Vec<Vec<f64>> =
                picks.iter().map(|(n, t)| (1..=lags).flat_map(|tau| seqs[*n][t - tau].clone()).collect()).collect();
            let target: Vec<Vec<f64>> = picks.iter().map(|(n, t)| seqs[*n][*t].clone()).collect();
            let eps = normal_mat(batch, k, &mut rng);
            let mut g = Graph::new();
            let vars = dynamics.vars(&mut g);
            let lv = g.leaf(Mat::from_rows(&lag_rows));
            let pred = dynamics.apply(&mut g, &vars, lv, &eps);
            let loss = g.mse(pred, Mat::from_rows(&target));
            g.backward(loss)?;
            trace.push(g.value(loss).scalar());
            let grads = dynamics.gradient(&g, &vars);
            step_all(&mut adam, dynamics.params_mut(), &grads)?;
        }
        Ok((dynamics, trace))
    }
}

/// One Adam step over parameters split across several networks.
pub(crate) fn step_all<'a>(adam: &mut Adam, parts: impl Iterator<Item = &'a mut [f64]>, grads: &[f64]) -> Result<()> {
    let mut parts: Vec<&mut [f64]> = parts.collect();
    let mut flat: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    adam.step(&mut flat, grads)?;
    let mut off = 0;
    for p in parts.iter_mut() {
        let n = p.len();
        p.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    Ok(())
}

/// `d(z_t, s_{t-1}) ≈ s_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub net: Mlp,
    pub latent_dim: usize,
    pub width: usize,
}

impl Decoder {
    pub fn new(latent_dim: usize, width: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut widths = vec![latent_dim + width];
        widths.extend_from_slice(hidden);
        widths.push(width);
        Ok(Self { net: Mlp::new(&widths, Activation::Tanh, Activation::Identity, rng)?, latent_dim, width })
    }

    pub fn decode(&self, z: &[f64], prev: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch { expected: self.latent_dim, got: z.len() });
        }
        if prev.len() != self.width {
            return Err(Error::DimensionMismatch { expected: self.width, got: prev.len() });
        }
        let mut input = z.to_vec();
        input.extend_from_slice(prev);
        self.net.forward(&input)
    }

    /// Fits on `(z_t, s_{t-1}, s_t)` triples.
    pub fn fit(triples: &[(Vec<f64>, Vec<f64>, Vec<f64>)], hidden: &[usize], steps: usize, batch: usize, lr: f64, key: &RngKey) -> Result<(Self, Vec<f64>)> {
        let (z, prev, _) = triples.first().ok_or_else(|| Error::InvalidArgument("no decoder samples".into()))?;
        let mut dec = Self::new(z.len(), prev.len(), hidden, &mut key.child("init").rng())?;
        let mut adam = Adam::new(dec.net.param_count(), lr);
        let mut rng = key.child("batches").rng();
        let mut trace = Vec::with_capacity(steps);
        for _ in 0..steps {
            let picks: Vec<&(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..batch).map(|_| &triples[rng.random_range(0..triples.len())]).collect();
            let x: Vec<Vec<f64>> = picks.iter().map(|(z, p, _)| z.iter().chain(p).copied().collect()).collect();
            let y: Vec<Vec<f64>> = picks.iter().map(|(_, _, s)| s.clone()).collect();
            let (loss, grad) = crate::nn::grad(&dec.net, &Mat::from_rows(&x), |g, out| g.mse(out, Mat::from_rows(&y)))?;
            trace.push(loss);
            adam.step(dec.net.params_mut(), &grad)?;
        }
        Ok((dec, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_rng;

    #[test]
    fn zero_noise_is_deterministic_and_shaped() {
        let d = LatentDynamics::new(3, 2, &[8], &mut keyed_rng(0, "d")).unwrap();
        let lags = vec![vec![0.1, 0.2, 0.3], vec![-0.1, 0.0, 0.5]];
        let a = d.predict(&lags, &[0.0; 3]).unwrap();
        assert_eq!(a, d.predict(&lags, &[0.0; 3]).unwrap());
        assert_eq!(a.len(), 3);
        assert!(d.predict(&lags[..1], &[0.0; 3]).is_err());
    }

    #[test]
    fn graph_matches_forward() {
        let d = LatentDynamics::new(2, 2, &[5], &mut keyed_rng(1, "d")).unwrap();
        let lags = vec![vec![0.3, -0.2], vec![0.7, 0.1]];
        let eps = Mat::from_vec(1, 2, vec![0.4, -1.0]);
        let mut g = Graph::new();
        let vars = d.vars(&mut g);
        let lv = g.leaf(Mat::row_vec(lags.concat()));
        let out = d.apply(&mut g, &vars, lv, &eps);
        let direct = d.predict(&lags, &eps.data).unwrap();
        for (a, b) in g.value(out).data.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_linear_dynamics() {
        // z_t = A z_{t-1} + eps with eps ~ N(0, s^2)
        let (k, s) = (3, 0.1);
        let a = [[0.8, 0.1, 0.0], [-0.2, 0.7, 0.1], [0.0, 0.3, 0.5]];
        let mut rng = keyed_rng(2, "lin");
        let seqs: Vec<Vec<Vec<f64>>> = (0..20)
            .map(|_| {
                let mut z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mut out = vec![z.clone()];
                for _ in 0..100 {
                    z = (0..k)
                        .map(|i| (0..k).map(|j| a[i][j] * z[j]).sum::<f64>() + s * { let e: f64 = StandardNormal.sample(&mut rng); e })
                        .collect();
                    out.push(z.clone());
                }
                out
            })
            .collect();
        let (dynamics, _) = LatentDynamics::fit(&seqs, 1, &[16], 3000, 64, 3e-3, &RngKey::new(0, "dyn")).unwrap();
        let mut mse = 0.0;
        let mut n = 0;
        for seq in &seqs[..5] {
            for t in 1..seq.len() {
                let p = dynamics.predict(&[seq[t - 1].clone()], &[0.0; 3]).unwrap();
                mse += p.iter().zip(&seq[t]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / k as f64;
                n += 1;
            }
        }
        mse /= n as f64;
        assert!(mse < 2.0 * s * s, "mse {mse}");
    }

    #[test]
    fn decoder_recovers_additive_update() {
        // s_t = s_{t-1} + B z_t + noise
        let (k, d, s) = (2, 4, 0.05);
        let bm = [[0.5, -0.3], [0.2, 0.4], [-0.6, 0.1], [0.0, 0.7]];
        let mut rng = keyed_rng(3, "dec");
        let triples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..2000)
            .map(|_| {
                let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                let prev: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let next = (0..d)
                    .map(|i| prev[i] + bm[i][0] * z[0] + bm[i][1] * z[1] + s * { let e: f64 = StandardNormal.sample(&mut rng); e })
                    .collect();
                (z, prev, next)
            })
            .collect();
        let (dec, _) = Decoder::fit(&triples[..1500], &[32], 3000, 64, 3e-3, &RngKey::new(0, "dec")).unwrap();
        let mse = triples[1500..]
            .iter()
            .map(|(z, p, n)| dec.decode(z, p).unwrap().iter().zip(n).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d as f64)
            .sum::<f64>()
            / 500.0;
        assert!(mse < 2.0 * s * s, "mse {mse}");
        assert_eq!(dec.decode(&triples[0].0, &triples[0].1).unwrap().len(), d);
    }
}
