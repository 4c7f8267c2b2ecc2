//! Tape-based reverse-mode differentiation over 2-D `f64` arrays.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters live
//! in a [`ParamStore`] and are borrowed, not copied, by the graph.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Tensor = Array2<f64>;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    frozen: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "parameter {name} registered twice");
        self.names.push(name);
        self.values.push(value);
        self.frozen.push(false);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.frozen[id.0] = frozen;
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    Gelu(Var),
    Softplus(Var),
    Log(Var),
    Square(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Tensor, inv_std: Vec<f64> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    Gather(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    SmoothL1(Var, Var),
    MeanAbsDiff(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Gradients of one backward pass.
#[derive(Debug)]
pub struct Gradients {
    vars: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn into_params(self) -> HashMap<ParamId, Tensor> {
        self.params
    }

    pub fn var(&self, v: Var) -> Option<&Tensor> {
        self.vars.get(v.0).and_then(Option::as_ref)
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x);
    (y, dy)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn scalar(v: f64) -> Tensor {
    Array2::from_elem((1, 1), v)
}

impl<'p> Graph<'p> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), param_vars: HashMap::new(), dropout: None }
    }

    /// Training-mode graph with inverted dropout drawn from `rng`.
    pub fn training(store: &'p ParamStore, dropout: f64, rng: ChaCha8Rng) -> Self {
        let dropout = (dropout > 0.0).then_some((dropout, rng));
        Graph { store, nodes: Vec::new(), param_vars: HashMap::new(), dropout }
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let n = &self.nodes[v.0];
        match (&n.value, &n.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value: Some(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Input leaf whose gradient is reported by [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let needs_grad = !self.store.is_frozen(id);
        self.nodes.push(Node { value: None, op: Op::Param(id), needs_grad });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) / self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Div(a, b), ng)
    }

    /// Adds the `1 × m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b).0, 1, "add_row expects a single row");
        let out = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::AddRow(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a) * s;
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        let k = self.input(c.clone());
        self.add(a, k)
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let out = self.value(a) * &c;
        let ng = self.ng(a);
        self.push(out, Op::MulConst(a, c), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| gelu(x).0);
        let ng = self.ng(a);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus);
        let ng = self.ng(a);
        self.push(out, Op::Softplus(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        let ng = self.ng(a);
        self.push(out, Op::Log(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        let ng = self.ng(a);
        self.push(out, Op::Square(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row /= s;
        }
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Row-wise layer normalization with a `1 × m` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let m = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / m;
            row -= mean;
            let var = row.fold(0.0, |a, &v| a + v * v) / m;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row *= is;
            inv_std.push(is);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std }, ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows column mismatch");
        let ng = parts.iter().any(|v| self.ng(*v));
        self.push(out, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        let ng = parts.iter().any(|v| self.ng(*v));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        let ng = self.ng(a);
        self.push(out, Op::SliceRows(a, start, end), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start, end), ng)
    }

    /// Rows of `table` selected by `idx`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Var {
        let t = self.value(table);
        let out = t.select(Axis(0), idx);
        let ng = self.ng(table);
        self.push(out, Op::Gather(table, idx.to_vec()), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = scalar(v.sum() / v.len() as f64);
        let ng = self.ng(a);
        self.push(out, Op::Mean(a), ng)
    }

    /// Elementwise smooth-L1 (threshold 1) of `a - b`, averaged.
    pub fn smooth_l1(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "smooth_l1 shape mismatch");
        let n = self.value(a).len() as f64;
        let total = Zip::from(self.value(a)).and(self.value(b)).fold(0.0, |acc, &x, &y| acc + smooth_l1(x - y));
        let ng = self.ng(a) || self.ng(b);
        self.push(scalar(total / n), Op::SmoothL1(a, b), ng)
    }

    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mean_abs_diff shape mismatch");
        let n = self.value(a).len() as f64;
        let total = Zip::from(self.value(a)).and(self.value(b)).fold(0.0, |acc, &x, &y| acc + (x - y).abs());
        let ng = self.ng(a) || self.ng(b);
        self.push(scalar(total / n), Op::MeanAbsDiff(a, b), ng)
    }

    /// Inverted dropout in training mode, identity otherwise.
    pub fn dropout(&mut self, a: Var) -> Var {
        let shape = self.shape(a);
        let Some((p, rng)) = self.dropout.as_mut() else {
            return a;
        };
        let p = *p;
        let keep = 1.0 / (1.0 - p);
        let mask = Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep });
        self.mul_const(a, mask)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params = HashMap::new();
        for (id, v) in &self.param_vars {
            if let Some(g) = grads[v.0].take() {
                params.insert(*id, g);
            }
        }
        Gradients { vars: grads, params }
    }

    fn backprop(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: Tensor| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => *t += &delta,
                slot => *slot = Some(delta),
            }
        };
        let ng = |v: Var| nodes[v.0].needs_grad;
        match &nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if ng(*a) {
                    acc(*a, g.dot(&self.value(*b).t()));
                }
                if ng(*b) {
                    acc(*b, self.value(*a).t().dot(g));
                }
            }
            Op::MatMulT(a, b) => {
                if ng(*a) {
                    acc(*a, g.dot(self.value(*b)));
                }
                if ng(*b) {
                    acc(*b, g.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if ng(*a) {
                    acc(*a, g * self.value(*b));
                }
                if ng(*b) {
                    acc(*b, g * self.value(*a));
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if ng(*a) {
                    acc(*a, g / bv);
                }
                if ng(*b) {
                    let av = self.value(*a);
                    let mut d = g * av;
                    Zip::from(&mut d).and(bv).for_each(|d, &b| *d = -*d / (b * b));
                    acc(*b, d);
                }
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                if ng(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(a, s) => acc(*a, g * *s),
            Op::MulConst(a, c) => acc(*a, g * c),
            Op::Gelu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| *d *= gelu(x).1);
                acc(*a, d);
            }
            Op::Softplus(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| *d *= sigmoid(x));
                acc(*a, d);
            }
            Op::Log(a) => acc(*a, g / self.value(*a)),
            Op::Square(a) => acc(*a, g * self.value(*a) * 2.0),
            Op::SoftmaxRows(a) => {
                let y = nodes[i].value.as_ref().expect("softmax value");
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = drow.sum();
                    Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d -= y * s);
                }
                acc(*a, d);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                if ng(*gain) {
                    acc(*gain, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if ng(*bias) {
                    acc(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if ng(*x) {
                    let gx_hat = g * self.value(*gain);
                    let m = xhat.ncols() as f64;
                    let mut dx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let gh = gx_hat.row(r);
                        let xh = xhat.row(r);
                        let s1 = gh.sum();
                        let s2 = gh.dot(&xh);
                        let k = inv_std[r] / m;
                        Zip::from(dx.row_mut(r)).and(&gh).and(&xh).for_each(|d, &gh, &xh| {
                            *d = k * (m * gh - s1 - xh * s2);
                        });
                    }
                    acc(*x, dx);
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.shape(*p).0;
                    if ng(*p) {
                        acc(*p, g.slice(s![start..start + n, ..]).to_owned());
                    }
                    start += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.shape(*p).1;
                    if ng(*p) {
                        acc(*p, g.slice(s![.., start..start + n]).to_owned());
                    }
                    start += n;
                }
            }
            Op::SliceRows(a, start, end) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![*start..*end, ..]).assign(g);
                acc(*a, d);
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, d);
            }
            Op::Gather(table, idx) => {
                let mut d = Array2::zeros(self.shape(*table));
                for (r, &j) in idx.iter().enumerate() {
                    let mut row = d.row_mut(j);
                    row += &g.row(r);
                }
                acc(*table, d);
            }
            Op::Sum(a) => acc(*a, Array2::from_elem(self.shape(*a), g[[0, 0]])),
            Op::Mean(a) => {
                let shape = self.shape(*a);
                acc(*a, Array2::from_elem(shape, g[[0, 0]] / (shape.0 * shape.1) as f64));
            }
            Op::SmoothL1(a, b) => {
                let av = self.value(*a);
                let k = g[[0, 0]] / av.len() as f64;
                let mut d = av - self.value(*b);
                d.mapv_inplace(|x| k * x.clamp(-1.0, 1.0));
                if ng(*b) {
                    acc(*b, -&d);
                }
                acc(*a, d);
            }
            Op::MeanAbsDiff(a, b) => {
                let av = self.value(*a);
                let k = g[[0, 0]] / av.len() as f64;
                let mut d = av - self.value(*b);
                d.mapv_inplace(|x| if x > 0.0 { k } else if x < 0.0 { -k } else { 0.0 });
                if ng(*b) {
                    acc(*b, -&d);
                }
                acc(*a, d);
            }
        }
    }
}

pub fn smooth_l1(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}
