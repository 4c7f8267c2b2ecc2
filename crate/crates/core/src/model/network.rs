use ndarray::s;
use rand::Rng;

use super::ModelConfig;
use crate::nn::layers::{normal_init, sinusoidal, Decoder, Encoder, Linear};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

const PE_CACHE: usize = 512;

/// Diagonal Gaussian as two `1 × d` graph rows.
#[derive(Debug, Clone, Copy)]
pub struct Dist {
    pub mu: Var,
    pub sigma: Var,
}

/// Parameter handles of the full network. Values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    dim: usize,
    feat_dim: usize,
    pe: Tensor,
    embed: ParamId,
    past_in: Linear,
    past_enc: Encoder,
    text_mu: ParamId,
    text_sigma: ParamId,
    text_sep: ParamId,
    text_enc: Encoder,
    motion_in: Linear,
    motion_mu: ParamId,
    motion_sigma: ParamId,
    motion_enc: Encoder,
    dec: Decoder,
    dec_out: Linear,
}

impl Network {
    /// Register all parameters in `store`, in a fixed order.
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, feat_dim: usize, vocab: usize, rng: &mut R) -> Self {
        let d = cfg.latent_dim;
        let (l, h, ff) = (cfg.layers, cfg.heads, cfg.feedforward);
        let embed = store.add("text.embed", normal_init(rng, vocab, d, 1.0));
        if cfg.frozen_text {
            store.set_frozen(embed, true);
        }
        let mut token = |store: &mut ParamStore, name: &str| store.add(name, normal_init(rng, 1, d, 1.0));
        let text_mu = token(store, "text_enc.mu_token");
        let text_sigma = token(store, "text_enc.sigma_token");
        let text_sep = token(store, "text_enc.sep_token");
        let motion_mu = token(store, "motion_enc.mu_token");
        let motion_sigma = token(store, "motion_enc.sigma_token");
        Network {
            dim: d,
            feat_dim,
            pe: sinusoidal(PE_CACHE, d),
            embed,
            past_in: Linear::new(store, "past.in", feat_dim, d, rng),
            past_enc: Encoder::new(store, "past.enc", l, d, h, ff, rng),
            text_mu,
            text_sigma,
            text_sep,
            text_enc: Encoder::new(store, "text_enc.enc", l, d, h, ff, rng),
            motion_in: Linear::new(store, "motion_enc.in", feat_dim, d, rng),
            motion_mu,
            motion_sigma,
            motion_enc: Encoder::new(store, "motion_enc.enc", l, d, h, ff, rng),
            dec: Decoder::new(store, "dec", l, d, h, ff, rng),
            dec_out: Linear::new(store, "dec.out", d, feat_dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn embedding(&self) -> ParamId {
        self.embed
    }

    fn positions(&self, n: usize) -> Tensor {
        if n <= PE_CACHE {
            self.pe.slice(s![..n, ..]).to_owned()
        } else {
            sinusoidal(n, self.dim)
        }
    }

    fn add_positions(&self, g: &mut Graph, x: Var) -> Var {
        let pe = self.positions(g.shape(x).0);
        g.add_const(x, &pe)
    }

    /// Per-token features: embedding rows plus sinusoidal positions.
    pub fn encode_text(&self, g: &mut Graph, tokens: &[usize]) -> Var {
        let table = g.param(self.embed);
        let e = g.gather(table, tokens);
        self.add_positions(g, e)
    }

    /// One feature row per past frame; `None` when there are no past frames.
    pub fn past_encode(&self, g: &mut Graph, past: Var) -> Option<Var> {
        let (n, d) = g.shape(past);
        assert_eq!(d, self.feat_dim, "past frame width");
        if n == 0 {
            return None;
        }
        let x = self.past_in.forward(g, past);
        let x = self.add_positions(g, x);
        let x = g.dropout(x);
        Some(self.past_enc.forward(g, x))
    }

    fn dist_from(&self, g: &mut Graph, out: Var) -> Dist {
        let mu = g.slice_rows(out, 0, 1);
        let raw = g.slice_rows(out, 1, 2);
        let sigma = g.softplus(raw);
        Dist { mu, sigma }
    }

    /// `[mu_token, sigma_token, past.., sep, text..]` through the
    /// past-conditioned text encoder.
    pub fn encode_distribution(&self, g: &mut Graph, text: Var, past: Option<Var>) -> Dist {
        let mut parts = vec![g.param(self.text_mu), g.param(self.text_sigma)];
        parts.extend(past);
        parts.push(g.param(self.text_sep));
        parts.push(text);
        let seq = g.concat_rows(&parts);
        let seq = self.add_positions(g, seq);
        let seq = g.dropout(seq);
        let out = self.text_enc.forward(g, seq);
        self.dist_from(g, out)
    }

    pub fn motion_encode(&self, g: &mut Graph, feats: Var) -> Dist {
        assert_eq!(g.shape(feats).1, self.feat_dim, "motion frame width");
        let x = self.motion_in.forward(g, feats);
        let mu = g.param(self.motion_mu);
        let sigma = g.param(self.motion_sigma);
        let seq = g.concat_rows(&[mu, sigma, x]);
        let seq = self.add_positions(g, seq);
        let seq = g.dropout(seq);
        let out = self.motion_enc.forward(g, seq);
        self.dist_from(g, out)
    }

    /// Reparameterized sample; `eps = None` returns the mean.
    pub fn sample(&self, g: &mut Graph, dist: &Dist, eps: Option<Tensor>) -> Var {
        match eps {
            None => dist.mu,
            Some(e) => {
                let e = g.input(e);
                let noise = g.mul(dist.sigma, e);
                g.add(dist.mu, noise)
            }
        }
    }

    /// `frames × feat_dim` standardized features from a latent row.
    pub fn decode(&self, g: &mut Graph, z: Var, frames: usize) -> Var {
        assert!(frames > 0, "decode needs at least one frame");
        let queries = g.input(self.positions(frames));
        let h = self.dec.forward(g, queries, z);
        self.dec_out.forward(g, h)
    }
}
