//! Layer builders on top of the tape: linear, scaled dot-product attention,
//! multi-head attention, transformer encoder layer, gated recurrent cell and
//! sinusoidal positional encodings. Each layer has a `register_*` companion
//! that creates its parameters under a name prefix.

use crate::error::{NnError, Result};
use crate::graph::{Graph, NodeRef};
use crate::store::{Init, ParamStore};
use crate::tensor::Tensor;

pub fn register_linear(
    store: &mut ParamStore,
    prefix: &str,
    d_in: usize,
    d_out: usize,
) -> Result<()> {
    store.register(&format!("{prefix}.w"), d_in, d_out, Init::FanIn)?;
    store.register(&format!("{prefix}.b"), 1, d_out, Init::Zeros)
}

pub fn linear(g: &mut Graph, store: &ParamStore, x: NodeRef, prefix: &str) -> Result<NodeRef> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_row_broadcast(y, b)
}

pub fn register_layer_norm(store: &mut ParamStore, prefix: &str, d: usize) -> Result<()> {
    store.register(&format!("{prefix}.gain"), 1, d, Init::Ones)?;
    store.register(&format!("{prefix}.bias"), 1, d, Init::Zeros)
}

pub fn layer_norm(g: &mut Graph, store: &ParamStore, x: NodeRef, prefix: &str) -> Result<NodeRef> {
    let gain = g.param(store, &format!("{prefix}.gain"))?;
    let bias = g.param(store, &format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias)
}

/// Scaled dot-product attention: `softmax(Q K^T / sqrt(d)) V`, with masked
/// entries excluded from the softmax. `mask[i*kv_len + j] == true` allows
/// query row i to attend to key row j.
pub fn attention(
    g: &mut Graph,
    q: NodeRef,
    k: NodeRef,
    v: NodeRef,
    mask: Option<&[bool]>,
) -> Result<NodeRef> {
    let d = g.value(q).cols();
    if g.value(k).cols() != d || g.value(v).rows() != g.value(k).rows() {
        return Err(NnError::Shape {
            op: "attention",
            detail: format!(
                "q {:?}, k {:?}, v {:?}",
                g.value(q).shape(),
                g.value(k).shape(),
                g.value(v).shape()
            ),
        });
    }
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (d as f64).sqrt());
    let probs = g.softmax_rows_masked(scaled, mask)?;
    g.matmul(probs, v)
}

pub struct EncoderLayerCfg {
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
}

pub fn register_encoder_layer(
    store: &mut ParamStore,
    prefix: &str,
    cfg: &EncoderLayerCfg,
) -> Result<()> {
    for name in ["wq", "wk", "wv", "wo"] {
        register_linear(store, &format!("{prefix}.{name}"), cfg.d, cfg.d)?;
    }
    register_linear(store, &format!("{prefix}.ff1"), cfg.d, cfg.ff)?;
    register_linear(store, &format!("{prefix}.ff2"), cfg.ff, cfg.d)?;
    register_layer_norm(store, &format!("{prefix}.ln1"), cfg.d)?;
    register_layer_norm(store, &format!("{prefix}.ln2"), cfg.d)
}

/// Post-norm transformer encoder layer: multi-head self-attention with a
/// residual connection and layer norm, then a position-wise feed-forward
/// block with its own residual and layer norm.
pub fn encoder_layer(
    g: &mut Graph,
    store: &ParamStore,
    x: NodeRef,
    prefix: &str,
    cfg: &EncoderLayerCfg,
    mask: Option<&[bool]>,
) -> Result<NodeRef> {
    if cfg.d % cfg.heads != 0 {
        return Err(NnError::HeadSplit {
            d: cfg.d,
            heads: cfg.heads,
        });
    }
    let dh = cfg.d / cfg.heads;
    let q = linear(g, store, x, &format!("{prefix}.wq"))?;
    let k = linear(g, store, x, &format!("{prefix}.wk"))?;
    let v = linear(g, store, x, &format!("{prefix}.wv"))?;
    let mut head_outs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        head_outs.push(attention(g, qh, kh, vh, mask)?);
    }
    let mut cat = head_outs[0];
    for &h in &head_outs[1..] {
        cat = g.concat_cols(cat, h)?;
    }
    let att = linear(g, store, cat, &format!("{prefix}.wo"))?;
    let res1 = g.add(x, att)?;
    let x1 = layer_norm(g, store, res1, &format!("{prefix}.ln1"))?;
    let f1 = linear(g, store, x1, &format!("{prefix}.ff1"))?;
    let f1 = g.relu(f1);
    let f2 = linear(g, store, f1, &format!("{prefix}.ff2"))?;
    let res2 = g.add(x1, f2)?;
    layer_norm(g, store, res2, &format!("{prefix}.ln2"))
}

pub fn register_gru(store: &mut ParamStore, prefix: &str, d_in: usize, d_h: usize) -> Result<()> {
    for gate in ["r", "z", "n"] {
        store.register(&format!("{prefix}.w{gate}"), d_in, d_h, Init::FanIn)?;
        store.register(&format!("{prefix}.u{gate}"), d_h, d_h, Init::FanIn)?;
        store.register(&format!("{prefix}.b{gate}"), 1, d_h, Init::Zeros)?;
    }
    Ok(())
}

/// Gated recurrent update:
/// r = sig(x Wr + h Ur + br), z = sig(x Wz + h Uz + bz),
/// n = tanh(x Wn + r*(h Un) + bn), h' = (1-z)*n + z*h.
pub fn gru_cell(
    g: &mut Graph,
    store: &ParamStore,
    x: NodeRef,
    h: NodeRef,
    prefix: &str,
) -> Result<NodeRef> {
    let gate = |g: &mut Graph, name: &str| -> Result<NodeRef> {
        let w = g.param(store, &format!("{prefix}.w{name}"))?;
        let u = g.param(store, &format!("{prefix}.u{name}"))?;
        let b = g.param(store, &format!("{prefix}.b{name}"))?;
        let xa = g.matmul(x, w)?;
        let ha = g.matmul(h, u)?;
        let s = g.add(xa, ha)?;
        g.add_row_broadcast(s, b)
    };
    let r_pre = gate(g, "r")?;
    let r = g.sigmoid(r_pre);
    let z_pre = gate(g, "z")?;
    let z = g.sigmoid(z_pre);

    let wn = g.param(store, &format!("{prefix}.wn"))?;
    let un = g.param(store, &format!("{prefix}.un"))?;
    let bn = g.param(store, &format!("{prefix}.bn"))?;
    let xn = g.matmul(x, wn)?;
    let hn = g.matmul(h, un)?;
    let rhn = g.mul(r, hn)?;
    let n_pre0 = g.add(xn, rhn)?;
    let n_pre = g.add_row_broadcast(n_pre0, bn)?;
    let n = g.tanh(n_pre);

    let one_minus_z = g.affine(z, -1.0, 1.0);
    let a = g.mul(one_minus_z, n)?;
    let b = g.mul(z, h)?;
    g.add(a, b)
}

/// Run a GRU over a sequence (rows of `xs`), returning the final hidden state.
pub fn gru_sequence(
    g: &mut Graph,
    store: &ParamStore,
    xs: NodeRef,
    prefix: &str,
    d_h: usize,
) -> Result<NodeRef> {
    let steps = g.value(xs).rows();
    let mut h = g.constant(Tensor::zeros(1, d_h));
    for t in 0..steps {
        let xt = row(g, xs, t)?;
        h = gru_cell(g, store, xt, h, prefix)?;
    }
    Ok(h)
}

/// Extract row `i` of a [n,m] node as a [1,m] node.
pub fn row(g: &mut Graph, x: NodeRef, i: usize) -> Result<NodeRef> {
    let (n, m) = (g.value(x).rows(), g.value(x).cols());
    if i >= n {
        return Err(NnError::Shape {
            op: "row",
            detail: format!("row {i} of {n}"),
        });
    }
    // selection matrix keeps the op set small
    let mut sel = Tensor::zeros(1, n);
    sel.data_mut()[i] = 1.0;
    let s = g.constant(sel);
    let _ = m;
    g.matmul(s, x)
}

/// Sinusoidal positional encodings, added to projected inputs so the encoder
/// sees sequence order.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(len, d);
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            t.set(pos, i, v);
        }
    }
    t
}

/// Mean-pooling matrix mapping `from` rows to `to` rows. When shrinking, each
/// output row averages a contiguous bucket of input rows; when growing, input
/// rows are repeated (each output row copies input row floor(i*from/to)).
pub fn pooling_matrix(from: usize, to: usize) -> Tensor {
    let mut p = Tensor::zeros(to, from);
    if from >= to {
        for i in 0..to {
            let start = i * from / to;
            let end = ((i + 1) * from / to).max(start + 1);
            let w = 1.0 / (end - start) as f64;
            for j in start..end {
                p.set(i, j, w);
            }
        }
    } else {
        for i in 0..to {
            p.set(i, i * from / to, 1.0);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::AdamHyper;

    #[test]
    fn attention_single_key_returns_value_row() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.0, 0.5, 1.5]).unwrap());
        let k = g.constant(Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        let v = g.constant(Tensor::from_vec(1, 3, vec![7.0, 8.0, 9.0]).unwrap());
        let out = attention(&mut g, q, k, v, None).unwrap();
        for i in 0..2 {
            assert_eq!(g.value(out).row(i), &[7.0, 8.0, 9.0]);
        }
    }

    #[test]
    fn attention_mask_selects_single_column() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::from_vec(1, 2, vec![0.4, -0.2]).unwrap());
        let k = g.constant(Tensor::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5]).unwrap());
        let v = g.constant(Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let mask = vec![false, true, false];
        let out = attention(&mut g, q, k, v, Some(&mask)).unwrap();
        assert!((g.value(out).data()[0] - 3.0).abs() < 1e-12);
        assert!((g.value(out).data()[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn attention_fully_masked_row_errors() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(1, 2));
        let k = g.constant(Tensor::zeros(2, 2));
        let v = g.constant(Tensor::zeros(2, 2));
        let mask = vec![false, false];
        assert!(matches!(
            attention(&mut g, q, k, v, Some(&mask)),
            Err(NnError::FullyMaskedRow { row: 0 })
        ));
    }

    #[test]
    fn attention_matches_three_step_oracle() {
        // explicit oracle: scores, softmax, weighted sum computed by hand loops
        let qv = [0.2, -0.5, 1.0, 0.3, 0.8, -0.1, -0.7, 0.4, 0.9, 0.1, 0.2, -0.3];
        let kv = [0.5, 0.1, -0.2, 0.7, 1.1, -0.6, 0.3, 0.2, -0.4, 0.8, 0.05, 0.6];
        let vv = [1.0, 0.0, 2.0, -1.0, 0.5, 0.25, 3.0, 1.5, -0.5, 0.75, 2.5, 0.0];
        let mut g = Graph::new();
        let q = g.constant(Tensor::from_vec(3, 4, qv.to_vec()).unwrap());
        let k = g.constant(Tensor::from_vec(3, 4, kv.to_vec()).unwrap());
        let v = g.constant(Tensor::from_vec(3, 4, vv.to_vec()).unwrap());
        let out = attention(&mut g, q, k, v, None).unwrap();

        let d = 4.0f64;
        for i in 0..3 {
            let mut scores = [0.0; 3];
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..4 {
                    s += qv[i * 4 + l] * kv[j * 4 + l];
                }
                scores[j] = s / d.sqrt();
            }
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for c in 0..4 {
                let mut expect = 0.0;
                for j in 0..3 {
                    expect += exps[j] / sum * vv[j * 4 + c];
                }
                assert!((g.value(out).at(i, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoder_layer_len_one_is_shape_preserving_and_finite() {
        let cfg = EncoderLayerCfg { d: 8, heads: 2, ff: 16 };
        let mut store = ParamStore::new(3);
        register_encoder_layer(&mut store, "enc", &cfg).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(1, 8, (0..8).map(|v| v as f64 * 0.1).collect()).unwrap());
        let y = encoder_layer(&mut g, &store, x, "enc", &cfg, None).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 8]);
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn encoder_layer_zero_ff_reduces_to_layer_norm_of_first_block() {
        let cfg = EncoderLayerCfg { d: 4, heads: 2, ff: 8 };
        let mut store = ParamStore::new(5);
        register_encoder_layer(&mut store, "enc", &cfg).unwrap();
        store.set_value("enc.ff1.w", &vec![0.0; 4 * 8]).unwrap();
        store.set_value("enc.ff2.w", &vec![0.0; 8 * 4]).unwrap();

        let x_vals = vec![0.5, -0.3, 0.9, 0.0, 1.2, 0.4, -0.8, 0.1];
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(2, 4, x_vals.clone()).unwrap());
        let full = encoder_layer(&mut g, &store, x, "enc", &cfg, None).unwrap();

        // oracle path: attention block only, then ln2 of x1 directly
        let mut g2 = Graph::new();
        let x2 = g2.constant(Tensor::from_vec(2, 4, x_vals).unwrap());
        let q = linear(&mut g2, &store, x2, "enc.wq").unwrap();
        let k = linear(&mut g2, &store, x2, "enc.wk").unwrap();
        let v = linear(&mut g2, &store, x2, "enc.wv").unwrap();
        let mut heads = Vec::new();
        for h in 0..2 {
            let qh = g2.slice_cols(q, h * 2, 2).unwrap();
            let kh = g2.slice_cols(k, h * 2, 2).unwrap();
            let vh = g2.slice_cols(v, h * 2, 2).unwrap();
            heads.push(attention(&mut g2, qh, kh, vh, None).unwrap());
        }
        let cat = g2.concat_cols(heads[0], heads[1]).unwrap();
        let att = linear(&mut g2, &store, cat, "enc.wo").unwrap();
        let res = g2.add(x2, att).unwrap();
        let x1 = layer_norm(&mut g2, &store, res, "enc.ln1").unwrap();
        let expect = layer_norm(&mut g2, &store, x1, "enc.ln2").unwrap();

        for (a, b) in g.value(full).data().iter().zip(g2.value(expect).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_zero_params_zero_state_gives_zero() {
        let mut store = ParamStore::new(1);
        register_gru(&mut store, "gru", 3, 4).unwrap();
        for gate in ["r", "z", "n"] {
            store.set_value(&format!("gru.w{gate}"), &vec![0.0; 12]).unwrap();
            store.set_value(&format!("gru.u{gate}"), &vec![0.0; 16]).unwrap();
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(vec![1.0, -2.0, 3.0]));
        let h = g.constant(Tensor::zeros(1, 4));
        let h2 = gru_cell(&mut g, &store, x, h, "gru").unwrap();
        for &v in g.value(h2).data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn gru_identity_preserving_gates_keep_state() {
        // saturate the update gate so h' = z*h with z ~ 1
        let mut store = ParamStore::new(1);
        register_gru(&mut store, "gru", 2, 3).unwrap();
        for gate in ["r", "n"] {
            store.set_value(&format!("gru.w{gate}"), &vec![0.0; 6]).unwrap();
            store.set_value(&format!("gru.u{gate}"), &vec![0.0; 9]).unwrap();
        }
        store.set_value("gru.wz", &vec![0.0; 6]).unwrap();
        store.set_value("gru.uz", &vec![0.0; 9]).unwrap();
        store.set_value("gru.bz", &[40.0, 40.0, 40.0]).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(vec![0.0, 0.0]));
        let h = g.constant(Tensor::row_vector(vec![0.7, -0.4, 1.1]));
        let h2 = gru_cell(&mut g, &store, x, h, "gru").unwrap();
        for (a, b) in g.value(h2).data().iter().zip([0.7, -0.4, 1.1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_random_step_matches_scalar_loop_oracle() {
        let mut store = ParamStore::new(99);
        register_gru(&mut store, "gru", 3, 2).unwrap();
        let xv = [0.4, -0.9, 0.2];
        let hv = [0.3, -0.6];
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(xv.to_vec()));
        let h = g.constant(Tensor::row_vector(hv.to_vec()));
        let h2 = gru_cell(&mut g, &store, x, h, "gru").unwrap();

        let dot = |w: &Tensor, v: &[f64], j: usize| -> f64 {
            (0..v.len()).map(|i| v[i] * w.at(i, j)).sum()
        };
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        for j in 0..2 {
            let wr = store.get("gru.wr").unwrap();
            let ur = store.get("gru.ur").unwrap();
            let br = store.get("gru.br").unwrap().data()[j];
            let wz = store.get("gru.wz").unwrap();
            let uz = store.get("gru.uz").unwrap();
            let bz = store.get("gru.bz").unwrap().data()[j];
            let wn = store.get("gru.wn").unwrap();
            let un = store.get("gru.un").unwrap();
            let bn = store.get("gru.bn").unwrap().data()[j];
            let r = sig(dot(wr, &xv, j) + dot(ur, &hv, j) + br);
            let z = sig(dot(wz, &xv, j) + dot(uz, &hv, j) + bz);
            let n = (dot(wn, &xv, j) + r * dot(un, &hv, j) + bn).tanh();
            let expect = (1.0 - z) * n + z * hv[j];
            assert!((g.value(h2).data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_descends_on_square() {
        // 3 steps on f(w) = w^2 from w = 1: strictly decreasing toward 0
        let mut store = ParamStore::new(1);
        store.register("w", 1, 1, Init::Const(1.0)).unwrap();
        let hyper = AdamHyper::with_lr(0.1);
        let mut prev = 1.0;
        for _ in 0..3 {
            let mut g = Graph::new();
            let w = g.param(&store, "w").unwrap();
            let sq = g.mul(w, w).unwrap();
            let loss = g.sum_all(sq);
            g.backward(loss, &mut store).unwrap();
            store.adam_step(&hyper).unwrap();
            let cur = store.get("w").unwrap().data()[0];
            assert!(cur < prev && cur > 0.0 - 0.5);
            prev = cur;
        }
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut store = ParamStore::new(1);
        store.register("w", 2, 2, Init::FanIn).unwrap();
        store.register("unused", 2, 2, Init::FanIn).unwrap();
        let before = store.get("unused").unwrap().data().to_vec();
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let s = g.sum_all(w);
        g.backward(s, &mut store).unwrap();
        // `unused` got a zero gradient; its first adam step must not move it
        store.adam_step(&AdamHyper::default()).unwrap();
        assert_eq!(store.get("unused").unwrap().data(), before.as_slice());
    }

    #[test]
    fn pooling_matrix_shrink_averages_pairs() {
        let p = pooling_matrix(6, 3);
        let mut g = Graph::new();
        let pm = g.constant(p);
        let x = g.constant(
            Tensor::from_vec(6, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        );
        let y = g.matmul(pm, x).unwrap();
        assert_eq!(g.value(y).data(), &[1.5, 3.5, 5.5]);
    }

    #[test]
    fn pooling_matrix_grow_repeats_rows() {
        // explicit index arithmetic oracle: row i copies input row floor(i*3/5)
        let p = pooling_matrix(3, 5);
        let mut g = Graph::new();
        let pm = g.constant(p);
        let x = g.constant(Tensor::from_vec(3, 1, vec![10.0, 20.0, 30.0]).unwrap());
        let y = g.matmul(pm, x).unwrap();
        let expect: Vec<f64> = (0..5).map(|i| [10.0, 20.0, 30.0][i * 3 / 5]).collect();
        assert_eq!(g.value(y).data(), expect.as_slice());
    }
}
