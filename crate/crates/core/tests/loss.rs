mod common;

use common::oracles::gauss;
use motion_compose::model::loss::{
    cross_kl_node, kl_diag, kl_node, kl_prior_node, kl_standard, latent_l1, reconstruction_loss, smooth_l1_mean,
};
use motion_compose::model::{Dist, Sampling};
use motion_compose::nn::{Graph, ParamStore};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()
}

fn log_normal_pdf(x: f64, mu: f64, s: f64) -> f64 {
    -0.5 * ((x - mu) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn smooth_l1_closed_form_cases() {
    assert_eq!(smooth_l1_mean(&[0.0], &[0.5]).unwrap(), 0.125);
    assert_eq!(smooth_l1_mean(&[0.0], &[-3.0]).unwrap(), 2.5);
    assert_eq!(smooth_l1_mean(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
    assert_eq!(smooth_l1_mean(&[0.0, 0.0], &[1.0, -0.5]).unwrap(), (0.5 + 0.125) / 2.0);
    assert!(smooth_l1_mean(&[0.0], &[0.0, 1.0]).is_err());
}

#[test]
fn smooth_l1_matches_direct_evaluation_and_graph_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = ParamStore::new();
    for _ in 0..200 {
        let (r, c) = (rng.random_range(1..6), rng.random_range(1..6));
        let a = Array2::from_shape_simple_fn((r, c), || 2.0 * gauss(&mut rng));
        let b = Array2::from_shape_simple_fn((r, c), || 2.0 * gauss(&mut rng));
        let mut direct = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            let d: f64 = (x - y).abs();
            direct += if d < 1.0 { 0.5 * d * d } else { d - 0.5 };
        }
        direct /= (r * c) as f64;
        let lib = smooth_l1_mean(a.as_slice().unwrap(), b.as_slice().unwrap()).unwrap();
        assert!((lib - direct).abs() < 1e-9);
        let mut g = Graph::new(&store);
        let (va, vb) = (g.input(a.clone()), g.input(b.clone()));
        let node = g.smooth_l1(va, vb);
        assert!((g.scalar_value(node) - direct).abs() < 1e-9);
    }
}

#[test]
fn reconstruction_sums_the_two_segments() {
    let r = reconstruction_loss(&[0.0, 0.0], &[0.5, 2.0], &[1.0], &[1.0]).unwrap();
    assert_eq!(r, (0.125 + 1.5) / 2.0);
}

#[test]
fn kl_of_identical_gaussians_is_zero() {
    assert_eq!(kl_standard(&[0.0; 8], &[1.0; 8]).unwrap(), 0.0);
    let mu = [0.3, -1.2, 4.0];
    let s = [0.2, 1.5, 3.0];
    assert!(kl_diag(&mu, &s, &mu, &s).unwrap().abs() < 1e-15);
    assert!(kl_standard(&[0.0], &[0.0]).is_err());
}

#[test]
fn kl_closed_form_one_dimension() {
    // KL(N(1, 2^2) || N(0, 1)) = ln(1/2) + (4 + 1)/2 - 1/2
    let v = kl_standard(&[1.0], &[2.0]).unwrap();
    assert!((v - (0.5f64.ln() + 2.0)).abs() < 1e-15);
}

#[test]
fn kl_matches_monte_carlo_within_one_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..3 {
        let dim = 4;
        let mu1: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
        let mu2: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
        let s1: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let s2: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let closed = kl_diag(&mu1, &s1, &mu2, &s2).unwrap();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            for i in 0..dim {
                let x = mu1[i] + s1[i] * gauss(&mut rng);
                acc += log_normal_pdf(x, mu1[i], s1[i]) - log_normal_pdf(x, mu2[i], s2[i]);
            }
        }
        let mc = acc / n as f64;
        assert!((mc - closed).abs() / closed < 0.01, "trial {trial}: closed {closed} mc {mc}");
    }
}

#[test]
fn graph_kl_nodes_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let store = ParamStore::new();
    for _ in 0..50 {
        let d = 6;
        let v = |rng: &mut ChaCha8Rng, pos: bool| -> Vec<f64> {
            (0..d).map(|_| if pos { rng.random_range(0.2..2.0) } else { gauss(rng) }).collect()
        };
        let (m1, s1, m2, s2) = (v(&mut rng, false), v(&mut rng, true), v(&mut rng, false), v(&mut rng, true));
        let mut g = Graph::new(&store);
        let a = Dist { mu: g.input(row(&m1)), sigma: g.input(row(&s1)) };
        let b = Dist { mu: g.input(row(&m2)), sigma: g.input(row(&s2)) };
        let ab = kl_node(&mut g, &a, &b);
        let prior = kl_prior_node(&mut g, &a);
        let cross = cross_kl_node(&mut g, &a, &b);
        let kab = kl_diag(&m1, &s1, &m2, &s2).unwrap();
        let kba = kl_diag(&m2, &s2, &m1, &s1).unwrap();
        assert!((g.scalar_value(ab) - kab).abs() < 1e-9);
        assert!((g.scalar_value(prior) - kl_standard(&m1, &s1).unwrap()).abs() < 1e-9);
        let expected = kab + kba + kl_standard(&m2, &s2).unwrap();
        assert!((g.scalar_value(cross) - expected).abs() < 1e-9);
    }
}

#[test]
fn latent_l1_is_mean_absolute_difference() {
    assert_eq!(latent_l1(&[1.0, -1.0], &[0.0, 1.0]).unwrap(), 1.5);
    assert!(latent_l1(&[], &[]).is_err());
}

#[test]
fn reparameterized_samples_have_the_right_moments() {
    let mu = [0.5, -2.0, 0.0];
    let sigma = [0.3, 1.7, 1.0];
    let n = 100_000u64;
    let (mut sum, mut sq) = ([0.0; 3], [0.0; 3]);
    for i in 0..n {
        let eps = Sampling::Stochastic(99).child(i).noise(3).unwrap();
        for k in 0..3 {
            let z = mu[k] + sigma[k] * eps[[0, k]];
            sum[k] += z;
            sq[k] += z * z;
        }
    }
    for k in 0..3 {
        let mean = sum[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        assert!((mean - mu[k]).abs() < 4.0 * sigma[k] / (n as f64).sqrt(), "mean {mean}");
        assert!((var / (sigma[k] * sigma[k]) - 1.0).abs() < 0.02, "var {var}");
    }
    assert!(Sampling::Deterministic.noise(3).is_none());
    assert_eq!(Sampling::Stochastic(1).noise(4), Sampling::Stochastic(1).noise(4));
    assert_ne!(Sampling::Stochastic(1).noise(4), Sampling::Stochastic(2).noise(4));
}
