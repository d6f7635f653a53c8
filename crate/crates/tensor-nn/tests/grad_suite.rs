//! Finite-difference verification of every differentiable operation exposed
//! by the crate, on randomized small shapes at 64-bit precision.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_nn::check::{check_gradients, collect_grads};
use tensor_nn::nn::{
    attention, encoder_layer, gru_sequence, linear, register_encoder_layer, register_gru,
    register_linear, EncoderLayerCfg,
};
use tensor_nn::{Graph, Init, NodeRef, ParamStore, Result, Tensor};

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Project a [n,m] output to a scalar with a fixed random weighting so the
/// whole Jacobian is exercised.
fn project(g: &mut Graph, out: NodeRef, weights: &Tensor) -> Result<NodeRef> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    Ok(g.sum_all(prod))
}

fn run_check<F>(store: &mut ParamStore, build: F, label: &str)
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeRef>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store).unwrap();
    g.backward(loss, store).unwrap();
    let analytic = collect_grads(store);
    let report = check_gradients(
        store,
        |s| {
            let mut g = Graph::new();
            let l = build(&mut g, s)?;
            Ok(g.value(l).item())
        },
        &analytic,
        EPS,
    )
    .unwrap();
    assert!(
        report.max_rel < TOL,
        "{label}: max rel {:.3e} at {} over {} elements",
        report.max_rel,
        report.worst,
        report.checked
    );
    let mut touched = BTreeMap::new();
    touched.extend(analytic);
    assert!(!touched.is_empty(), "{label}: no gradients collected");
    store.clear_grads();
}

#[test]
fn linear_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..3 {
        let (n, din, dout) = (
            rng.gen_range(1..5usize),
            rng.gen_range(1..6usize),
            rng.gen_range(1..6usize),
        );
        let x = rand_tensor(&mut rng, n, din);
        let w = rand_tensor(&mut rng, n, dout);
        let mut store = ParamStore::new(100 + trial);
        register_linear(&mut store, "lin", din, dout).unwrap();
        run_check(
            &mut store,
            |g, s| {
                let xn = g.constant(x.clone());
                let y = linear(g, s, xn, "lin")?;
                project(g, y, &w)
            },
            "linear",
        );
    }
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..3 {
        let (n, d) = (rng.gen_range(1..4usize), rng.gen_range(2..7usize));
        let w = rand_tensor(&mut rng, n, d);
        let xv = rand_tensor(&mut rng, n, d);
        let mut store = ParamStore::new(200 + trial);
        store.register("x", n, d, Init::FanIn).unwrap();
        store.register("ln.gain", 1, d, Init::Ones).unwrap();
        store.register("ln.bias", 1, d, Init::Zeros).unwrap();
        store.set_value("x", xv.data()).unwrap();
        run_check(
            &mut store,
            |g, s| {
                let x = g.param(s, "x")?;
                let gain = g.param(s, "ln.gain")?;
                let bias = g.param(s, "ln.bias")?;
                let y = g.layer_norm(x, gain, bias)?;
                project(g, y, &w)
            },
            "layer_norm",
        );
    }
}

#[test]
fn softmax_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..3 {
        let (n, m) = (rng.gen_range(1..4usize), rng.gen_range(2..6usize));
        let w = rand_tensor(&mut rng, n, m);
        let mut store = ParamStore::new(300 + trial);
        store.register("x", n, m, Init::FanIn).unwrap();
        run_check(
            &mut store,
            |g, s| {
                let x = g.param(s, "x")?;
                let y = g.softmax_rows(x)?;
                project(g, y, &w)
            },
            "softmax_rows",
        );
    }
}

#[test]
fn masked_softmax_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (n, m) = (3usize, 4usize);
    let mut mask = vec![true; n * m];
    mask[1] = false;
    mask[6] = false;
    mask[11] = false;
    let w = rand_tensor(&mut rng, n, m);
    let mut store = ParamStore::new(314);
    store.register("x", n, m, Init::FanIn).unwrap();
    let mask2 = mask.clone();
    run_check(
        &mut store,
        move |g, s| {
            let x = g.param(s, "x")?;
            let y = g.softmax_rows_masked(x, Some(&mask2))?;
            project(g, y, &w)
        },
        "softmax_masked",
    );
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for trial in 0..2 {
        let (a, b, d) = (
            rng.gen_range(1..4usize),
            rng.gen_range(1..4usize),
            rng.gen_range(2..5usize),
        );
        let w = rand_tensor(&mut rng, a, d);
        let mut store = ParamStore::new(400 + trial);
        store.register("q", a, d, Init::FanIn).unwrap();
        store.register("k", b, d, Init::FanIn).unwrap();
        store.register("v", b, d, Init::FanIn).unwrap();
        run_check(
            &mut store,
            |g, s| {
                let q = g.param(s, "q")?;
                let k = g.param(s, "k")?;
                let v = g.param(s, "v")?;
                let y = attention(g, q, k, v, None)?;
                project(g, y, &w)
            },
            "attention",
        );
    }
}

#[test]
fn encoder_layer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = EncoderLayerCfg { d: 4, heads: 2, ff: 6 };
    let n = 3;
    let x = rand_tensor(&mut rng, n, cfg.d);
    let w = rand_tensor(&mut rng, n, cfg.d);
    let mut store = ParamStore::new(500);
    register_encoder_layer(&mut store, "enc", &cfg).unwrap();
    run_check(
        &mut store,
        |g, s| {
            let xn = g.constant(x.clone());
            let y = encoder_layer(g, s, xn, "enc", &cfg, None)?;
            project(g, y, &w)
        },
        "encoder_layer",
    );
}

#[test]
fn gru_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (steps, din, dh) = (3usize, 3usize, 3usize);
    let xs = rand_tensor(&mut rng, steps, din);
    let w = rand_tensor(&mut rng, 1, dh);
    let mut store = ParamStore::new(600);
    register_gru(&mut store, "gru", din, dh).unwrap();
    run_check(
        &mut store,
        |g, s| {
            let x = g.constant(xs.clone());
            let h = gru_sequence(g, s, x, "gru", dh)?;
            project(g, h, &w)
        },
        "gru_sequence",
    );
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    let mut store = ParamStore::new(700);
    store.register("logits", 1, 5, Init::FanIn).unwrap();
    run_check(
        &mut store,
        |g, s| {
            let x = g.param(s, "logits")?;
            g.cross_entropy(x, 2)
        },
        "cross_entropy",
    );
}

#[test]
fn bce_with_logits_gradients_match_finite_differences() {
    let targets = vec![1.0, 0.0, 1.0, 1.0];
    let mut store = ParamStore::new(800);
    store.register("logits", 4, 1, Init::FanIn).unwrap();
    run_check(
        &mut store,
        move |g, s| {
            let x = g.param(s, "logits")?;
            g.bce_with_logits_mean(x, &targets)
        },
        "bce_with_logits",
    );
}

#[test]
fn elementwise_ops_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let (n, m) = (2usize, 3usize);
    let w = rand_tensor(&mut rng, n, m);
    let mut store = ParamStore::new(900);
    store.register("a", n, m, Init::FanIn).unwrap();
    store.register("b", n, m, Init::FanIn).unwrap();
    run_check(
        &mut store,
        |g, s| {
            let a = g.param(s, "a")?;
            let b = g.param(s, "b")?;
            let t = g.tanh(a);
            let sg = g.sigmoid(b);
            let prod = g.mul(t, sg)?;
            let e = g.exp(prod);
            let r = g.relu(e);
            let aff = g.affine(r, 0.7, -0.2);
            project(g, aff, &w)
        },
        "elementwise_chain",
    );
}

#[test]
fn backward_basics() {
    // loss = sum(W) -> grad all ones
    let mut store = ParamStore::new(1);
    store.register("w", 2, 3, Init::FanIn).unwrap();
    store.register("idle", 2, 2, Init::FanIn).unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let loss = g.sum_all(w);
    g.backward(loss, &mut store).unwrap();
    assert_eq!(store.param("w").unwrap().grad().unwrap(), &[1.0; 6]);
    // untouched parameter gets an explicit zero gradient
    assert_eq!(store.param("idle").unwrap().grad().unwrap(), &[0.0; 4]);
    // backward twice without a fresh forward errors
    assert!(g.backward(loss, &mut store).is_err());
}
