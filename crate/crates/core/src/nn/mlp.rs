use super::graph::{dot, sigmoid, Graph, Mat, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    fn apply_graph(self, g: &mut Graph, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Tanh => g.tanh(v),
            Activation::Relu => g.relu(v),
            Activation::Sigmoid => g.sigmoid(v),
        }
    }
}

/// Fully connected network; parameters live in one flat vector laid out
/// layer by layer as `W (out×in, row-major)` followed by `b (out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Graph leaves holding one network's parameters.
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
}

fn param_count_for(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `hidden` applies to every layer
    /// but the last, which uses `output`.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {widths:?}")));
        }
        let n_layers = widths.len() - 1;
        let activations = (0..n_layers).map(|l| if l + 1 == n_layers { output } else { hidden }).collect();
        let mut params = Vec::with_capacity(param_count_for(widths));
        for w in widths.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self { widths: widths.to_vec(), activations, params })
    }

    pub fn from_parts(widths: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::InvalidArgument("widths/activations disagree".into()));
        }
        if params.len() != param_count_for(&widths) {
            return Err(Error::DimensionMismatch { expected: param_count_for(&widths), got: params.len() });
        }
        Ok(Self { widths, activations, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Flattened parameters.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replaces all parameters from a flat vector.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), got: flat.len() });
        }
        self.params.copy_from_slice(flat);
        Ok(())
    }

    /// Rounds parameters to f32 precision so a checkpoint round trip is exact.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    fn layer_slices(&self) -> impl Iterator<Item = (usize, usize, &[f64], &[f64], Activation)> {
        let mut offset = 0;
        self.widths.windows(2).zip(&self.activations).map(move |(w, act)| {
            let (inp, out) = (w[0], w[1]);
            let wm = &self.params[offset..offset + inp * out];
            let b = &self.params[offset + inp * out..offset + inp * out + out];
            offset += inp * out + out;
            (inp, out, wm, b, *act)
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::DimensionMismatch { expected: self.input_width(), got: x.len() });
        }
        let mut h = x.to_vec();
        for (inp, out, wm, b, act) in self.layer_slices() {
            h = (0..out).map(|o| act.apply(dot(&wm[o * inp..(o + 1) * inp], &h) + b[o])).collect();
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.input_width() {
            return Err(Error::DimensionMismatch { expected: self.input_width(), got: x.cols });
        }
        let mut out = Mat::zeros(x.rows, self.output_width());
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&self.forward(x.row(r))?);
        }
        Ok(out)
    }

    /// Registers the parameters as graph leaves.
    pub fn vars(&self, g: &mut Graph) -> MlpVars {
        let layers = self
            .layer_slices()
            .map(|(inp, out, wm, b, _)| {
                (g.leaf(Mat::from_vec(out, inp, wm.to_vec())), g.leaf(Mat::row_vec(b.to_vec())))
            })
            .collect();
        MlpVars { layers }
    }

    /// Forward pass inside a graph.
    pub fn apply(&self, g: &mut Graph, vars: &MlpVars, x: Var) -> Var {
        let mut h = x;
        for ((w, b), act) in vars.layers.iter().zip(&self.activations) {
            h = g.affine(h, *w, *b);
            h = act.apply_graph(g, h);
        }
        h
    }

    /// Flattened gradient from the last backward pass of `g`.
    pub fn gradient(&self, g: &Graph, vars: &MlpVars) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.len());
        for (w, b) in &vars.layers {
            out.extend_from_slice(&g.grad(*w).data);
            out.extend_from_slice(&g.grad(*b).data);
        }
        out
    }
}

/// Loss value and reverse-mode gradient of `loss(net(batch))` with respect
/// to every parameter of `net`.
pub fn grad(net: &Mlp, batch: &Mat, loss: impl FnOnce(&mut Graph, Var) -> Var) -> Result<(f64, Vec<f64>)> {
    if batch.cols != net.input_width() {
        return Err(Error::DimensionMismatch { expected: net.input_width(), got: batch.cols });
    }
    let mut g = Graph::new();
    let vars = net.vars(&mut g);
    let x = g.leaf(batch.clone());
    let y = net.apply(&mut g, &vars, x);
    let l = loss(&mut g, y);
    g.backward(l)?;
    Ok((g.value(l).scalar(), net.gradient(&g, &vars)))
}
