//! Reverse-mode gradients against central finite differences.

mod common;

use motion_compose::model::{item_loss, ModelConfig, ModelKind};
use motion_compose::nn::{Graph, ParamStore, Tensor};
use motion_compose::rng::stream;
use ndarray::Array2;
use rand::Rng;

const H: f64 = 1e-5;

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-3 * analytic.abs().max(numeric.abs()) || diff < 1e-7
}

fn random(rng: &mut impl Rng, r: usize, c: usize) -> Tensor {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

/// Check d loss / d param for every entry of every parameter in `store`.
fn check_ops(store: &ParamStore, build: impl Fn(&mut Graph) -> motion_compose::nn::Var) {
    let mut g = Graph::new(store);
    let loss = build(&mut g);
    let grads = g.backward(loss);
    for id in store.ids() {
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(store.get(id).dim()));
        for idx in 0..store.get(id).len() {
            let eval = |delta: f64| {
                let mut s = store.clone();
                let t = s.get_mut(id);
                let (r, c) = (idx / t.ncols(), idx % t.ncols());
                t[[r, c]] += delta;
                let mut g = Graph::new(&s);
                let l = build(&mut g);
                g.scalar_value(l)
            };
            let numeric = (eval(H) - eval(-H)) / (2.0 * H);
            let a = analytic.as_slice().unwrap()[idx];
            assert!(close(a, numeric), "{} [{idx}]: analytic {a} numeric {numeric}", store.name(id));
        }
    }
}

#[test]
fn elementwise_and_matrix_ops() {
    let mut rng = stream(11, &[]);
    let mut store = ParamStore::new();
    let a = store.add("a", random(&mut rng, 3, 4));
    let b = store.add("b", random(&mut rng, 4, 2));
    let c = store.add("c", random(&mut rng, 3, 2));
    let row = store.add("row", random(&mut rng, 1, 2));
    let gain = store.add("gain", random(&mut rng, 1, 4));
    let bias = store.add("bias", random(&mut rng, 1, 4));
    let pos = store.add("pos", random(&mut rng, 3, 2).mapv(|v| v.abs() + 0.5));
    check_ops(&store, |g| {
        let (a, b, c, row) = (g.param(a), g.param(b), g.param(c), g.param(row));
        let (gain, bias, pos) = (g.param(gain), g.param(bias), g.param(pos));
        let ab = g.matmul(a, b);
        let x = g.add(ab, c);
        let x = g.add_row(x, row);
        let y = g.gelu(x);
        let s = g.softplus(y);
        let q = g.div(s, pos);
        let l = g.log(pos);
        let m = g.mul(q, l);
        let sq = g.square(m);
        let sm = g.softmax_rows(sq);
        let ct = g.matmul_t(sm, c);
        let ln = g.layer_norm(a, gain, bias);
        let cat = g.concat_cols(&[ct, ln]);
        let rows = g.concat_rows(&[cat, cat]);
        let sl = g.slice_rows(rows, 1, 5);
        let sc = g.slice_cols(sl, 2, 6);
        let gath = g.gather(sc, &[0, 3, 3, 1]);
        let sub = g.sub(gath, sc);
        let scaled = g.scale(sub, 0.7);
        let target = g.input(Array2::from_elem((4, 4), 0.3));
        let h = g.smooth_l1(scaled, target);
        let mad = g.mean_abs_diff(ab, c);
        let mean = g.mean(sm);
        let total = g.sum(y);
        let t1 = g.add(h, mad);
        let t2 = g.add(t1, mean);
        let t3 = g.scale(total, 0.1);
        g.add(t2, t3)
    });
}

fn model_param_check(kind: ModelKind, names: &[&str]) {
    let pairs = common::small_pairs(2, 5);
    let cfg = ModelConfig { dropout: 0.0, ..ModelConfig::tiny() };
    let (model, items) = common::model_for(kind, cfg, &pairs, 9);
    let item = &items[0];
    let loss_of = |store: &ParamStore| {
        let mut m = model.clone();
        m.store = store.clone();
        let mut g = Graph::new(&m.store);
        let v = item_loss(&m, &mut g, item, 77).unwrap();
        g.scalar_value(v.total)
    };
    let mut g = Graph::new(&model.store);
    let v = item_loss(&model, &mut g, item, 77).unwrap();
    let grads = g.backward(v.total);
    let mut rng = stream(3, &[]);
    let mut checked = 0;
    for id in model.store.ids() {
        let name = model.store.name(id);
        if !names.iter().any(|n| name.starts_with(n)) {
            continue;
        }
        let value = model.store.get(id);
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(value.dim()));
        for _ in 0..3 {
            let (r, c) = (rng.random_range(0..value.nrows()), rng.random_range(0..value.ncols()));
            let mut plus = model.store.clone();
            plus.get_mut(id)[[r, c]] += H;
            let mut minus = model.store.clone();
            minus.get_mut(id)[[r, c]] -= H;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * H);
            let a = analytic[[r, c]];
            assert!(close(a, numeric), "{name}[{r},{c}]: analytic {a} numeric {numeric}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn teach_loss_encoders_and_decoder() {
    model_param_check(
        ModelKind::Teach,
        &["text.embed", "text_enc.", "past.in", "past.enc.0", "motion_enc.in", "motion_enc.mu", "dec.0", "dec.out"],
    );
}

#[test]
fn independent_loss_all_param_groups() {
    model_param_check(ModelKind::Independent, &["text", "motion", "dec"]);
}

#[test]
fn decode_wrt_latent() {
    let pairs = common::small_pairs(2, 5);
    let (model, _) = common::model_for(ModelKind::Teach, ModelConfig::tiny(), &pairs, 9);
    let mut rng = stream(4, &[]);
    let z0 = random(&mut rng, 1, model.config.latent_dim);
    let w = random(&mut rng, 7, model.feature_dim());
    let f = |z: &Tensor| {
        let mut g = Graph::new(&model.store);
        let zv = g.leaf(z.clone());
        let out = model.net.decode(&mut g, zv, 7);
        let wv = g.input(w.clone());
        let p = g.mul(out, wv);
        let s = g.sum(p);
        (g, s, zv)
    };
    let (g, s, zv) = f(&z0);
    let grad = g.backward(s).var(zv).unwrap().clone();
    for k in 0..z0.ncols() {
        let mut zp = z0.clone();
        zp[[0, k]] += H;
        let mut zm = z0.clone();
        zm[[0, k]] -= H;
        let (gp, sp, _) = f(&zp);
        let (gm, sm, _) = f(&zm);
        let numeric = (gp.scalar_value(sp) - gm.scalar_value(sm)) / (2.0 * H);
        assert!(close(grad[[0, k]], numeric), "z[{k}]: {} vs {numeric}", grad[[0, k]]);
    }
}

#[test]
fn past_encoder_wrt_input_frames() {
    let pairs = common::small_pairs(2, 5);
    let (model, _) = common::model_for(ModelKind::Teach, ModelConfig::tiny(), &pairs, 9);
    let mut rng = stream(5, &[]);
    let x0 = random(&mut rng, 4, model.feature_dim());
    let w = random(&mut rng, 4, model.config.latent_dim);
    let f = |x: &Tensor| {
        let mut g = Graph::new(&model.store);
        let xv = g.leaf(x.clone());
        let out = model.net.past_encode(&mut g, xv).unwrap();
        let wv = g.input(w.clone());
        let p = g.mul(out, wv);
        let s = g.sum(p);
        (g, s, xv)
    };
    let (g, s, xv) = f(&x0);
    let grad = g.backward(s).var(xv).unwrap().clone();
    for _ in 0..40 {
        let (r, c) = (rng.random_range(0..4), rng.random_range(0..x0.ncols()));
        let mut xp = x0.clone();
        xp[[r, c]] += H;
        let mut xm = x0.clone();
        xm[[r, c]] -= H;
        let (gp, sp, _) = f(&xp);
        let (gm, sm, _) = f(&xm);
        let numeric = (gp.scalar_value(sp) - gm.scalar_value(sm)) / (2.0 * H);
        assert!(close(grad[[r, c]], numeric), "x[{r},{c}]: {} vs {numeric}", grad[[r, c]]);
    }
}
