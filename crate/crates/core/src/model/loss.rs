//! Training objectives, both as graph nodes and as plain closed forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::Dist;
use crate::nn::{smooth_l1, Graph, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0} vs {1}")]
    Shape(usize, usize),
    #[error("standard deviation must be positive, got {0}")]
    Sigma(f64),
}

/// Per-component losses of one step, averaged over the batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// Text-branch reconstruction, summed over segments.
    pub recon: f64,
    /// Reconstruction from the motion-encoder latent, summed over segments.
    #[serde(default)]
    pub recon_motion: f64,
    pub kl: f64,
    pub cross_kl: f64,
    pub latent_l1: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.total, self.recon, self.recon_motion, self.kl, self.cross_kl, self.latent_l1].iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> LossReport {
        LossReport {
            total: self.total * s,
            recon: self.recon * s,
            recon_motion: self.recon_motion * s,
            kl: self.kl * s,
            cross_kl: self.cross_kl * s,
            latent_l1: self.latent_l1 * s,
        }
    }

    pub fn add(&self, o: &LossReport) -> LossReport {
        LossReport {
            total: self.total + o.total,
            recon: self.recon + o.recon,
            recon_motion: self.recon_motion + o.recon_motion,
            kl: self.kl + o.kl,
            cross_kl: self.cross_kl + o.cross_kl,
            latent_l1: self.latent_l1 + o.latent_l1,
        }
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<(), LossError> {
    if a.len() != b.len() {
        return Err(LossError::Shape(a.len(), b.len()));
    }
    Ok(())
}

/// Mean elementwise smooth-L1 (threshold 1).
pub fn smooth_l1_mean(gt: &[f64], gen: &[f64]) -> Result<f64, LossError> {
    same_len(gt, gen)?;
    if gt.is_empty() {
        return Err(LossError::Shape(0, 0));
    }
    Ok(gt.iter().zip(gen).map(|(a, b)| smooth_l1(a - b)).sum::<f64>() / gt.len() as f64)
}

/// Smooth-L1 of each segment, summed over the two segments.
pub fn reconstruction_loss(gt1: &[f64], gen1: &[f64], gt2: &[f64], gen2: &[f64]) -> Result<f64, LossError> {
    Ok(smooth_l1_mean(gt1, gen1)? + smooth_l1_mean(gt2, gen2)?)
}

/// `KL(N(mu1, diag s1²) || N(mu2, diag s2²))`.
pub fn kl_diag(mu1: &[f64], s1: &[f64], mu2: &[f64], s2: &[f64]) -> Result<f64, LossError> {
    same_len(mu1, s1)?;
    same_len(mu1, mu2)?;
    same_len(mu1, s2)?;
    let mut total = 0.0;
    for i in 0..mu1.len() {
        for s in [s1[i], s2[i]] {
            if !(s > 0.0) {
                return Err(LossError::Sigma(s));
            }
        }
        let d = mu1[i] - mu2[i];
        total += (s2[i] / s1[i]).ln() + (s1[i] * s1[i] + d * d) / (2.0 * s2[i] * s2[i]) - 0.5;
    }
    Ok(total)
}

/// KL divergence to the standard normal prior.
pub fn kl_standard(mu: &[f64], sigma: &[f64]) -> Result<f64, LossError> {
    kl_diag(mu, sigma, &vec![0.0; mu.len()], &vec![1.0; mu.len()])
}

pub fn latent_l1(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    same_len(a, b)?;
    if a.is_empty() {
        return Err(LossError::Shape(0, 0));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Graph node for `KL(dist || N(0, I))`.
pub fn kl_prior_node(g: &mut Graph, d: &Dist) -> Var {
    let s2 = g.square(d.sigma);
    let m2 = g.square(d.mu);
    let t = g.add(s2, m2);
    let t = g.scale(t, 0.5);
    let log_s = g.log(d.sigma);
    let t = g.sub(t, log_s);
    let s = g.sum(t);
    let n = g.shape(d.mu).1 as f64;
    let half = g.input(ndarray::Array2::from_elem((1, 1), -0.5 * n));
    g.add(s, half)
}

/// Graph node for `KL(a || b)` between diagonal Gaussians.
pub fn kl_node(g: &mut Graph, a: &Dist, b: &Dist) -> Var {
    let log_ratio = {
        let lb = g.log(b.sigma);
        let la = g.log(a.sigma);
        g.sub(lb, la)
    };
    let sa2 = g.square(a.sigma);
    let diff = g.sub(a.mu, b.mu);
    let d2 = g.square(diff);
    let num = g.add(sa2, d2);
    let sb2 = g.square(b.sigma);
    let den = g.scale(sb2, 2.0);
    let frac = g.div(num, den);
    let t = g.add(log_ratio, frac);
    let s = g.sum(t);
    let n = g.shape(a.mu).1 as f64;
    let half = g.input(ndarray::Array2::from_elem((1, 1), -0.5 * n));
    g.add(s, half)
}

/// `KL(t || m) + KL(m || t) + KL(m || prior)` for one segment.
pub fn cross_kl_node(g: &mut Graph, text: &Dist, motion: &Dist) -> Var {
    let a = kl_node(g, text, motion);
    let b = kl_node(g, motion, text);
    let c = kl_prior_node(g, motion);
    let ab = g.add(a, b);
    g.add(ab, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(kl_standard(&[0.0; 4], &[1.0; 4]).unwrap(), 0.0);
        assert!((kl_standard(&[1.0, 0.0, 0.0], &[1.0; 3]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(kl_diag(&[0.0], &[0.0], &[0.0], &[1.0]), Err(LossError::Sigma(_))));
        assert_eq!(smooth_l1_mean(&[0.5], &[0.0]).unwrap(), 0.125);
        assert_eq!(smooth_l1_mean(&[2.0], &[0.0]).unwrap(), 1.5);
        assert_eq!(reconstruction_loss(&[1.0, 2.0], &[1.0, 2.0], &[3.0], &[3.0]).unwrap(), 0.0);
        let z = [0.3, -1.2, 4.0];
        let z2: Vec<f64> = z.iter().map(|v| v + 0.1).collect();
        assert!((latent_l1(&z, &z2).unwrap() - 0.1).abs() < 1e-12);
        assert!(latent_l1(&z, &z2[..2]).is_err());
    }

    #[test]
    fn graph_nodes_match_closed_forms() {
        let store = crate::nn::ParamStore::new();
        let mut g = Graph::new(&store);
        let (m1, s1, m2, s2) = ([0.3, -0.2], [0.7, 1.4], [-0.1, 0.5], [1.1, 0.6]);
        let row = |v: [f64; 2]| ndarray::Array2::from_shape_vec((1, 2), v.to_vec()).unwrap();
        let a = Dist { mu: g.input(row(m1)), sigma: g.input(row(s1)) };
        let b = Dist { mu: g.input(row(m2)), sigma: g.input(row(s2)) };
        let k = kl_node(&mut g, &a, &b);
        assert!((g.scalar_value(k) - kl_diag(&m1, &s1, &m2, &s2).unwrap()).abs() < 1e-12);
        let p = kl_prior_node(&mut g, &a);
        assert!((g.scalar_value(p) - kl_standard(&m1, &s1).unwrap()).abs() < 1e-12);
    }
}
