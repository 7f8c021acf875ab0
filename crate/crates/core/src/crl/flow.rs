use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Mat, Var};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One strictly increasing scalar map
/// `s(x) = e^a x + c + sum_j e^{v_j} tanh(sum_i e^{W_ji} tanh(e^{u_i} x + b_i) + d_j)`.
/// Every weight on the path from `x` to the output is positive, so
/// `s'(x) >= e^a > 0`. With zero hidden width it is the affine map `e^a x + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMap {
    pub log_slope: f64,
    pub shift: f64,
    /// `H` entries each: `u`, `b`, `d`, `v`; `w` is `H × H` row-major.
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub w: Vec<f64>,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
}

impl MonotoneMap {
    pub fn affine(log_slope: f64, shift: f64) -> Self {
        Self { log_slope, shift, u: vec![], b: vec![], w: vec![], d: vec![], v: vec![] }
    }

    pub fn identity() -> Self {
        Self::affine(0.0, 0.0)
    }

    pub fn random(hidden: usize, log_slope: f64, shift: f64, rng: &mut Rng) -> Self {
        let mut draw = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
        Self {
            log_slope,
            shift,
            u: draw(hidden, -1.0, 0.0),
            b: draw(hidden, -1.0, 1.0),
            w: draw(hidden * hidden, -2.0, -1.0),
            d: draw(hidden, -1.0, 1.0),
            v: draw(hidden, -3.0, -2.0),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.len()
    }

    /// `(s(x), s'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let h = self.hidden();
        let mut s = self.log_slope.exp() * x + self.shift;
        let mut ds = self.log_slope.exp();
        if h == 0 {
            return (s, ds);
        }
        let h1: Vec<f64> = (0..h).map(|i| (self.u[i].exp() * x + self.b[i]).tanh()).collect();
        let dh1: Vec<f64> = (0..h).map(|i| (1.0 - h1[i] * h1[i]) * self.u[i].exp()).collect();
        for j in 0..h {
            let row = &self.w[j * h..(j + 1) * h];
            let pre = row.iter().zip(&h1).map(|(w, a)| w.exp() * a).sum::<f64>() + self.d[j];
            let dpre = row.iter().zip(&dh1).map(|(w, a)| w.exp() * a).sum::<f64>();
            let h2 = pre.tanh();
            s += self.v[j].exp() * h2;
            ds += self.v[j].exp() * (1.0 - h2 * h2) * dpre;
        }
        (s, ds)
    }

    /// `s^{-1}(y)` by bisection; `s` is unbounded in both directions because
    /// of the linear term.
    pub fn inverse(&self, y: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.eval(lo).0 > y {
            lo *= 2.0;
        }
        while self.eval(hi).0 < y {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid).0 < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn flat(&self) -> Vec<f64> {
        let mut p = vec![self.log_slope, self.shift];
        for part in [&self.u, &self.b, &self.w, &self.d, &self.v] {
            p.extend_from_slice(part);
        }
        p
    }

    fn set_flat(&mut self, p: &[f64]) {
        let h = self.hidden();
        self.log_slope = p[0];
        self.shift = p[1];
        let mut off = 2;
        for (part, n) in [(&mut self.u, h), (&mut self.b, h), (&mut self.w, h * h), (&mut self.d, h), (&mut self.v, h)] {
            part.copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }

    /// Mean negative log-likelihood of `xs` under the flow density, built on
    /// the tape together with `s'(x)` by forward-mode tangents.
    fn nll_graph(&self, g: &mut Graph, xs: &[f64]) -> (Var, Vec<Var>) {
        let n = xs.len();
        let h = self.hidden();
        let x = g.leaf(Mat::from_vec(n, 1, xs.to_vec()));
        let ones = g.leaf(Mat::filled(n, 1, 1.0));
        let a = g.leaf(Mat::from_vec(1, 1, vec![self.log_slope]));
        let c = g.leaf(Mat::from_vec(1, 1, vec![self.shift]));
        let ea = g.exp(a);
        let lin = g.linear(x, ea);
        let mut s = g.add_row(lin, c);
        let mut ds = g.linear(ones, ea);
        let mut leaves = vec![a, c];
        if h > 0 {
            let u = g.leaf(Mat::from_vec(h, 1, self.u.clone()));
            let b = g.leaf(Mat::row_vec(self.b.clone()));
            let w = g.leaf(Mat::from_vec(h, h, self.w.clone()));
            let d = g.leaf(Mat::row_vec(self.d.clone()));
            let v = g.leaf(Mat::from_vec(1, h, self.v.clone()));
            leaves.extend([u, b, w, d, v]);
            let (eu, ew, ev) = (g.exp(u), g.exp(w), g.exp(v));
            let pre1 = g.affine(x, eu, b);
            let h1 = g.tanh(pre1);
            let d1 = one_minus_square(g, h1);
            let bu = g.linear(ones, eu);
            let dh1 = g.mul(d1, bu);
            let pre2 = g.affine(h1, ew, d);
            let h2 = g.tanh(pre2);
            let d2 = one_minus_square(g, h2);
            let dpre2 = g.linear(dh1, ew);
            let dh2 = g.mul(d2, dpre2);
            let out = g.linear(h2, ev);
            s = g.add(s, out);
            let dout = g.linear(dh2, ev);
            ds = g.add(ds, dout);
        }
        // -log N(s) - log s' = 0.5 s^2 + 0.5 ln 2pi - log s'
        let s2 = g.square(s);
        let half = g.scale(s2, 0.5);
        let lds = g.log(ds);
        let diff = g.sub(half, lds);
        let mean = g.mean(diff);
        (g.add_scalar(mean, 0.5 * LN_2PI), leaves)
    }
}

fn one_minus_square(g: &mut Graph, h: Var) -> Var {
    let sq = g.square(h);
    let neg = g.scale(sq, -1.0);
    g.add_scalar(neg, 1.0)
}

/// Coordinate-wise flow mapping exogenous noise to independent standard
/// normals: `log p(eps) = sum_i log N(s_i(eps_i)) + log s_i'(eps_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseFlow {
    pub maps: Vec<MonotoneMap>,
}

impl NoiseFlow {
    pub fn identity(k: usize) -> Self {
        Self { maps: vec![MonotoneMap::identity(); k] }
    }

    pub fn dim(&self) -> usize {
        self.maps.len()
    }

    /// Maximum-likelihood fit of one map per coordinate. `samples[n][i]` is
    /// coordinate `i` of sample `n`; each map starts as the standardizing
    /// affine map of its coordinate.
    pub fn fit(samples: &[Vec<f64>], hidden: usize, steps: usize, lr: f64, rng: &mut Rng) -> Result<Self> {
        let k = samples.first().map(Vec::len).ok_or_else(|| Error::InvalidArgument("no flow samples".into()))?;
        let mut maps = Vec::with_capacity(k);
        for i in 0..k {
            let xs: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            crate::error::check_finite("flow samples", &xs)?;
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-6);
            let mut map = MonotoneMap::random(hidden, -std.ln(), -mean / std, rng);
            let mut params = map.flat();
            let mut adam = Adam::new(params.len(), lr);
            for _ in 0..steps {
                let mut g = Graph::new();
                let (loss, leaves) = map.nll_graph(&mut g, &xs);
                g.backward(loss)?;
                let grads: Vec<f64> = leaves.iter().flat_map(|l| g.grad(*l).data).collect();
                adam.step(&mut params, &grads)?;
                map.set_flat(&params);
            }
            maps.push(map);
        }
        Ok(Self { maps })
    }
}

/// Change-of-variables log-density of `eps` under `flow`.
pub fn flow_logdensity(flow: &NoiseFlow, eps: &[f64]) -> Result<f64> {
    if eps.len() != flow.dim() {
        return Err(Error::DimensionMismatch { expected: flow.dim(), got: eps.len() });
    }
    let mut total = 0.0;
    for (map, e) in flow.maps.iter().zip(eps) {
        let (s, ds) = map.eval(*e);
        if !(ds > 0.0) {
            return Err(Error::Invariant(format!("flow derivative {ds} at {e}")));
        }
        total += -0.5 * s * s - 0.5 * LN_2PI + ds.ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_relative_error};
    use crate::rng::keyed_rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn identity_at_zero() {
        let v = flow_logdensity(&NoiseFlow::identity(1), &[0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn affine_flow_closed_form_and_mass() {
        let flow = NoiseFlow { maps: vec![MonotoneMap::affine(2f64.ln(), 0.0)] };
        let v = flow_logdensity(&flow, &[0.7]).unwrap();
        let expect = -0.5 * 1.4f64.powi(2) - 0.5 * LN_2PI + 2f64.ln();
        assert!((v - expect).abs() < 1e-12);
        let mass = simpson(|e| flow_logdensity(&flow, &[e]).unwrap().exp(), -10.0, 10.0, 20_000);
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn nonlinear_flow_has_unit_mass() {
        for seed in 0..5 {
            let map = MonotoneMap::random(4, 0.0, 0.3, &mut keyed_rng(seed, "flow"));
            let flow = NoiseFlow { maps: vec![map] };
            let mass = simpson(|e| flow_logdensity(&flow, &[e]).unwrap().exp(), -10.0, 10.0, 20_000);
            assert!((mass - 1.0).abs() < 1e-6, "seed {seed}: {mass}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let map = MonotoneMap::random(5, 0.2, -0.1, &mut keyed_rng(1, "flow"));
        for x in [-3.0, -0.4, 0.0, 1.3, 5.0] {
            let h = 1e-6;
            let fd = (map.eval(x + h).0 - map.eval(x - h).0) / (2.0 * h);
            assert!((fd - map.eval(x).1).abs() < 1e-7);
            assert!((map.inverse(map.eval(x).0) - x).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_gradient_matches_finite_difference() {
        let map = MonotoneMap::random(3, 0.1, 0.2, &mut keyed_rng(2, "flow"));
        let xs = [-1.2, -0.3, 0.4, 2.2];
        let mut g = Graph::new();
        let (loss, leaves) = map.nll_graph(&mut g, &xs);
        g.backward(loss).unwrap();
        let analytic: Vec<f64> = leaves.iter().flat_map(|l| g.grad(*l).data).collect();
        let nll = |p: &[f64]| {
            let mut m = map.clone();
            m.set_flat(p);
            -xs.iter().map(|x| flow_logdensity(&NoiseFlow { maps: vec![m.clone()] }, &[*x]).unwrap()).sum::<f64>() / xs.len() as f64
        };
        let numeric = central_difference(nll, &map.flat(), 1e-5);
        assert!(max_relative_error(&analytic, &numeric, 1e-8) < 1e-4);
    }

    #[test]
    fn inverse_transform_samples_are_normal_after_flow() {
        // draw eps = s^{-1}(u) with u standard normal; s(eps) must then pass
        // a KS test against N(0, 1)
        let map = MonotoneMap::random(4, 0.5, -0.2, &mut keyed_rng(3, "flow"));
        let mut rng = keyed_rng(4, "ks");
        let n = 10_000;
        let mut ys: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = StandardNormal.sample(&mut rng);
                map.eval(map.inverse(u)).0
            })
            .collect();
        ys.sort_by(f64::total_cmp);
        let norm = Normal::standard();
        let d = ys
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let f = norm.cdf(*y);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic Kolmogorov tail: p = 2 sum (-1)^{j-1} exp(-2 j^2 n d^2)
        let lam = (n as f64).sqrt() * d;
        let p: f64 = (1..100).map(|j| 2.0 * (-1f64).powi(j - 1) * (-2.0 * (j * j) as f64 * lam * lam).exp()).sum();
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn fit_learns_scale_of_residuals() {
        let mut rng = keyed_rng(5, "fit");
        let samples: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![0.01 * a, 3.0 + 2.0 * b]
            })
            .collect();
        let flow = NoiseFlow::fit(&samples, 3, 200, 1e-2, &mut keyed_rng(6, "fit")).unwrap();
        let (s0, _) = flow.maps[0].eval(0.01);
        let (s1, _) = flow.maps[1].eval(5.0);
        assert!((s0 - 1.0).abs() < 0.2 && (s1 - 1.0).abs() < 0.2, "{s0} {s1}");
    }

    #[test]
    fn negative_derivative_rejected() {
        let flow = NoiseFlow { maps: vec![MonotoneMap::affine(f64::NEG_INFINITY, 0.0)] };
        assert!(matches!(flow_logdensity(&flow, &[0.0]), Err(Error::Invariant(_))));
    }
}
