//! Transformer building blocks on top of [`Graph`].

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::graph::{Graph, ParamId, ParamStore, Tensor, Var};

fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || u.sample(rng))
}

pub fn normal_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let n = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

/// Sinusoidal position table, `n × d`.
pub fn sinusoidal(n: usize, d: usize) -> Tensor {
    Array2::from_shape_fn((n, d), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), xavier(rng, input, output));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, output)));
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Array2::ones((1, dim)));
        let bias = store.add(format!("{name}.bias"), Array2::zeros((1, dim)));
        LayerNorm { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "model width {dim} not divisible by {heads} heads");
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
        }
    }

    /// Scaled dot-product attention of `query` rows over `memory` rows.
    pub fn forward(&self, g: &mut Graph, query: Var, memory: Var) -> Var {
        let q = self.q.forward(g, query);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let dim = g.shape(q).1;
        let hd = dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let outs: Vec<Var> = (0..self.heads)
            .map(|h| {
                let (a, b) = (h * hd, (h + 1) * hd);
                let (qh, kh, vh) = if self.heads == 1 {
                    (q, k, v)
                } else {
                    (g.slice_cols(q, a, b), g.slice_cols(k, a, b), g.slice_cols(v, a, b))
                };
                let scores = g.matmul_t(qh, kh);
                let scores = g.scale(scores, scale);
                let attn = g.softmax_rows(scores);
                let attn = g.dropout(attn);
                g.matmul(attn, vh)
            })
            .collect();
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.o.forward(g, joined)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    l1: Linear,
    l2: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Self {
        FeedForward {
            l1: Linear::new(store, &format!("{name}.l1"), dim, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.l1.forward(g, x);
        let h = g.gelu(h);
        let h = g.dropout(h);
        self.l2.forward(g, h)
    }
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, hidden: usize, rng: &mut R) -> Self {
        EncoderLayer {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, hidden, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.ln1.forward(g, x);
        let h = self.attn.forward(g, h, h);
        let h = g.dropout(h);
        let x = g.add(x, h);
        let h = self.ln2.forward(g, x);
        let h = self.ff.forward(g, h);
        let h = g.dropout(h);
        g.add(x, h)
    }
}

/// Pre-norm block with self-attention, cross-attention to a memory, and a
/// feed-forward sublayer.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross: MultiHeadAttention,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, hidden: usize, rng: &mut R) -> Self {
        DecoderLayer {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), dim, heads, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            cross: MultiHeadAttention::new(store, &format!("{name}.cross"), dim, heads, rng),
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, hidden, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, memory: Var) -> Var {
        let h = self.ln1.forward(g, x);
        let h = self.self_attn.forward(g, h, h);
        let h = g.dropout(h);
        let x = g.add(x, h);
        let h = self.ln2.forward(g, x);
        let h = self.cross.forward(g, h, memory);
        let h = g.dropout(h);
        let x = g.add(x, h);
        let h = self.ln3.forward(g, x);
        let h = self.ff.forward(g, h);
        let h = g.dropout(h);
        g.add(x, h)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    layers: Vec<EncoderLayer>,
    norm: LayerNorm,
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Encoder {
            layers: (0..layers)
                .map(|i| EncoderLayer::new(store, &format!("{name}.{i}"), dim, heads, hidden, rng))
                .collect(),
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Var {
        for l in &self.layers {
            x = l.forward(g, x);
        }
        self.norm.forward(g, x)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    layers: Vec<DecoderLayer>,
    norm: LayerNorm,
}

impl Decoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Decoder {
            layers: (0..layers)
                .map(|i| DecoderLayer::new(store, &format!("{name}.{i}"), dim, heads, hidden, rng))
                .collect(),
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var, memory: Var) -> Var {
        for l in &self.layers {
            x = l.forward(g, x, memory);
        }
        self.norm.forward(g, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_first_rows() {
        let pe = sinusoidal(3, 4);
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 2]] - 0.01f64.sin()).abs() < 1e-15);
    }
}
