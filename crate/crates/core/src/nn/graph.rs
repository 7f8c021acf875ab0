//! A small reverse-mode autodiff tape over dense row-major matrices.
//!
//! Each node stores its forward value; [`Graph::backward`] walks the tape in
//! reverse and accumulates adjoints. Only the primitives below exist, which
//! is enough for every loss in the crate.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    fn same_shape(&self, other: &Mat) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// x (B×in) · wᵀ (in×out) + b (1×out)
    Affine { x: Var, w: Var, b: Var },
    /// x (B×in) · wᵀ, no bias
    Linear { x: Var, w: Var },
    Add(Var, Var),
    /// a (B×c) + row (1×c) broadcast over rows
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// a (B×c) * col (B×1) broadcast over columns
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    /// B×c → B×1
    SumCols(Var),
    ConcatCols(Var, Var),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Mat>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// A leaf (parameter, input or constant). Gradients are available for
    /// every leaf after [`Graph::backward`].
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let av = &self.nodes[a.0].value;
        let value = Mat { rows: av.rows, cols: av.cols, data: av.data.iter().map(|x| f(*x)).collect() };
        self.push(value, op)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(av.same_shape(bv), "shape mismatch {}x{} vs {}x{}", av.rows, av.cols, bv.rows, bv.cols);
        let value = Mat {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect(),
        };
        self.push(value, op)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = self.linear_value(x, w);
        let bv = &self.nodes[b.0].value;
        assert_eq!(bv.data.len(), out.cols, "bias width");
        let mut out = out;
        for r in 0..out.rows {
            for (o, bb) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += bb;
            }
        }
        self.push(out, Op::Affine { x, w, b })
    }

    pub fn linear(&mut self, x: Var, w: Var) -> Var {
        let out = self.linear_value(x, w);
        self.push(out, Op::Linear { x, w })
    }

    fn linear_value(&self, x: Var, w: Var) -> Mat {
        let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        assert_eq!(xv.cols, wv.cols, "affine input width");
        let mut out = Mat::zeros(xv.rows, wv.rows);
        for r in 0..xv.rows {
            let xr = xv.row(r);
            for o in 0..wv.rows {
                out.data[r * wv.rows + o] = dot(xr, wv.row(o));
            }
        }
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        assert_eq!(rv.data.len(), av.cols, "broadcast row width");
        let mut out = av.clone();
        for r in 0..out.rows {
            for (o, x) in out.row_mut(r).iter_mut().zip(&rv.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (av, cv) = (&self.nodes[a.0].value, &self.nodes[col.0].value);
        assert_eq!(cv.rows, av.rows, "broadcast column height");
        assert_eq!(cv.cols, 1, "broadcast column width");
        let mut out = av.clone();
        for r in 0..out.rows {
            let c = cv.data[r];
            for o in out.row_mut(r) {
                *o *= c;
            }
        }
        self.push(out, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.push(out, Op::LogSoftmax(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.data.iter().sum::<f64>() / v.data.len().max(1) as f64;
        self.push(Mat::from_vec(1, 1, vec![s]), Op::Mean(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let data = (0..v.rows).map(|r| v.row(r).iter().sum()).collect();
        self.push(Mat::from_vec(v.rows, 1, data), Op::SumCols(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.rows, bv.rows, "concat row count");
        let cols = av.cols + bv.cols;
        let mut out = Mat::zeros(av.rows, cols);
        for r in 0..av.rows {
            out.data[r * cols..r * cols + av.cols].copy_from_slice(av.row(r));
            out.data[r * cols + av.cols..(r + 1) * cols].copy_from_slice(bv.row(r));
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Mean squared error between `a` and a constant target, averaged over
    /// every entry.
    pub fn mse(&mut self, a: Var, target: Mat) -> Var {
        let t = self.leaf(target);
        let d = self.sub(a, t);
        let sq = self.square(d);
        self.mean(sq)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.data.len() != 1 {
            return Err(Error::InvalidArgument("backward needs a scalar loss".into()));
        }
        if !lv.data[0].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v` (zeros if `v`
    /// did not influence the loss).
    pub fn grad(&self, v: Var) -> Mat {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let val = &self.nodes[v.0].value;
                Mat::zeros(val.rows, val.cols)
            }
        }
    }

    fn accum(&mut self, v: Var, delta: Mat) {
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn accum_map(&mut self, v: Var, g: &Mat, f: impl Fn(usize, f64) -> f64) {
        let data = g.data.iter().enumerate().map(|(i, gi)| f(i, *gi)).collect();
        self.accum(v, Mat { rows: g.rows, cols: g.cols, data });
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &Mat) {
        fn out(s: &Graph, i: usize) -> &Mat {
            &s.nodes[i].value
        }
        match *op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                self.linear_backward(x, w, g);
                let cols = g.cols;
                let mut db = vec![0.0; cols];
                for r in 0..g.rows {
                    for (d, gg) in db.iter_mut().zip(g.row(r)) {
                        *d += gg;
                    }
                }
                let bshape = (self.nodes[b.0].value.rows, self.nodes[b.0].value.cols);
                self.accum(b, Mat::from_vec(bshape.0, bshape.1, db));
            }
            Op::Linear { x, w } => self.linear_backward(x, w, g),
            Op::Add(a, b) => {
                self.accum(a, g.clone());
                self.accum(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(a, g.clone());
                self.accum_map(b, g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.nodes[a.0].value.data.clone(), self.nodes[b.0].value.data.clone());
                self.accum_map(a, g, |k, gi| gi * bv[k]);
                self.accum_map(b, g, |k, gi| gi * av[k]);
            }
            Op::AddRow(a, row) => {
                self.accum(a, g.clone());
                let mut dr = vec![0.0; g.cols];
                for r in 0..g.rows {
                    for (d, gg) in dr.iter_mut().zip(g.row(r)) {
                        *d += gg;
                    }
                }
                let shape = (self.nodes[row.0].value.rows, self.nodes[row.0].value.cols);
                self.accum(row, Mat::from_vec(shape.0, shape.1, dr));
            }
            Op::MulCol(a, col) => {
                let av = self.nodes[a.0].value.clone();
                let cv = self.nodes[col.0].value.data.clone();
                let cols = g.cols;
                self.accum_map(a, g, |k, gi| gi * cv[k / cols]);
                let dc = (0..g.rows).map(|r| dot(g.row(r), av.row(r))).collect();
                self.accum(col, Mat::from_vec(g.rows, 1, dc));
            }
            Op::Scale(a, c) => self.accum_map(a, g, |_, gi| gi * c),
            Op::AddScalar(a) => self.accum(a, g.clone()),
            Op::Tanh(a) => {
                let y = out(self, i).data.clone();
                self.accum_map(a, g, |k, gi| gi * (1.0 - y[k] * y[k]));
            }
            Op::Relu(a) => {
                let x = self.nodes[a.0].value.data.clone();
                self.accum_map(a, g, |k, gi| if x[k] > 0.0 { gi } else { 0.0 });
            }
            Op::Sigmoid(a) => {
                let y = out(self, i).data.clone();
                self.accum_map(a, g, |k, gi| gi * y[k] * (1.0 - y[k]));
            }
            Op::Exp(a) => {
                let y = out(self, i).data.clone();
                self.accum_map(a, g, |k, gi| gi * y[k]);
            }
            Op::Log(a) => {
                let x = self.nodes[a.0].value.data.clone();
                self.accum_map(a, g, |k, gi| gi / x[k]);
            }
            Op::Abs(a) => {
                let x = self.nodes[a.0].value.data.clone();
                self.accum_map(a, g, |k, gi| gi * sign(x[k]));
            }
            Op::Square(a) => {
                let x = self.nodes[a.0].value.data.clone();
                self.accum_map(a, g, |k, gi| 2.0 * gi * x[k]);
            }
            Op::Softmax(a) => {
                let y = out(self, i).clone();
                let mut d = Mat::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let inner = dot(g.row(r), y.row(r));
                    for c in 0..y.cols {
                        d.data[r * y.cols + c] = y.row(r)[c] * (g.row(r)[c] - inner);
                    }
                }
                self.accum(a, d);
            }
            Op::LogSoftmax(a) => {
                let y = out(self, i).clone();
                let mut d = Mat::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let gs: f64 = g.row(r).iter().sum();
                    for c in 0..y.cols {
                        d.data[r * y.cols + c] = g.row(r)[c] - y.row(r)[c].exp() * gs;
                    }
                }
                self.accum(a, d);
            }
            Op::Sum(a) => {
                let s = (self.nodes[a.0].value.rows, self.nodes[a.0].value.cols);
                self.accum(a, Mat::filled(s.0, s.1, g.data[0]));
            }
            Op::Mean(a) => {
                let s = (self.nodes[a.0].value.rows, self.nodes[a.0].value.cols);
                let n = (s.0 * s.1).max(1) as f64;
                self.accum(a, Mat::filled(s.0, s.1, g.data[0] / n));
            }
            Op::SumCols(a) => {
                let s = (self.nodes[a.0].value.rows, self.nodes[a.0].value.cols);
                let mut d = Mat::zeros(s.0, s.1);
                for r in 0..s.0 {
                    for v in d.row_mut(r) {
                        *v = g.data[r];
                    }
                }
                self.accum(a, d);
            }
            Op::ConcatCols(a, b) => {
                let ac = self.nodes[a.0].value.cols;
                let bc = self.nodes[b.0].value.cols;
                let mut da = Mat::zeros(g.rows, ac);
                let mut db = Mat::zeros(g.rows, bc);
                for r in 0..g.rows {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                }
                self.accum(a, da);
                self.accum(b, db);
            }
        }
    }

    fn linear_backward(&mut self, x: Var, w: Var, g: &Mat) {
        let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (inp, outp) = (wv.cols, wv.rows);
        let mut dx = Mat::zeros(xv.rows, inp);
        let mut dw = Mat::zeros(outp, inp);
        for r in 0..xv.rows {
            let xr = xv.row(r);
            let gr = g.row(r);
            let dxr = &mut dx.data[r * inp..(r + 1) * inp];
            for o in 0..outp {
                let go = gr[o];
                if go == 0.0 {
                    continue;
                }
                let wr = wv.row(o);
                let dwr = &mut dw.data[o * inp..(o + 1) * inp];
                for k in 0..inp {
                    dxr[k] += go * wr[k];
                    dwr[k] += go * xr[k];
                }
            }
        }
        self.accum(x, dx);
        self.accum(w, dw);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}
