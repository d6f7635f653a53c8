use crate::error::{shape_err, NnError, Result};
use crate::store::ParamStore;
use crate::tensor::{
    layer_norm_kernel, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, softmax_rows_kernel, Tensor,
    LAYER_NORM_EPS,
};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef(usize);

#[derive(Debug)]
enum Op {
    /// Leaf holding a constant or externally supplied value.
    Constant,
    /// Leaf holding a copy of a named parameter; gradients flow back to the store.
    Param(String),
    Matmul,
    Transpose,
    Add,
    /// `x [n,m] + b [1,m]`, b broadcast over rows.
    AddRowBroadcast,
    Mul,
    /// `a * x + b` elementwise; only the slope matters going backwards.
    Affine { a: f64 },
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    /// Row-wise softmax. Masked positions output exactly zero, so the
    /// backward formula handles them without remembering the mask.
    SoftmaxRows,
    /// Inputs: x [n,d], gain [1,d], bias [1,d].
    LayerNorm,
    ConcatCols,
    SliceCols { start: usize, len: usize },
    SumAll,
    /// Row-wise dot product of two [n,d] inputs -> [n,1].
    RowsDot,
    /// Cross-entropy of a [1,C] logit row against a class index.
    CrossEntropy { target: usize },
    /// Mean binary cross-entropy of [n,1] logits against fixed 0/1 targets.
    BceLogitsMean { targets: Vec<f64> },
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
}

/// Tape of recorded operations. Nodes are appended in topological order, so
/// the backward pass is a single reverse sweep. A tape is consumed by
/// `backward`; running it twice without rebuilding the forward pass errors.
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor) -> NodeRef {
        self.nodes.push(Node { op, inputs, value });
        NodeRef(self.nodes.len() - 1)
    }

    pub fn value(&self, n: NodeRef) -> &Tensor {
        &self.nodes[n.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> NodeRef {
        self.push(Op::Constant, vec![], t)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeRef> {
        let value = store.get(name)?.clone();
        Ok(self.push(Op::Param(name.to_string()), vec![], value))
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (ar, ac) = dims(self.value(a));
        let (br, bc) = dims(self.value(b));
        if ac != br {
            return Err(shape_err("matmul", format!("[{ar},{ac}] @ [{br},{bc}]")));
        }
        let mut out = Tensor::zeros(ar, bc);
        matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            ar,
            ac,
            bc,
        );
        Ok(self.push(Op::Matmul, vec![a.0, b.0], out))
    }

    pub fn transpose(&mut self, x: NodeRef) -> NodeRef {
        let (n, m) = dims(self.value(x));
        let src = self.value(x).data();
        let mut out = Tensor::zeros(m, n);
        for i in 0..n {
            for j in 0..m {
                out.data_mut()[j * n + i] = src[i * m + j];
            }
        }
        self.push(Op::Transpose, vec![x.0], out)
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(
                "add",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        Ok(self.push(Op::Add, vec![a.0, b.0], out))
    }

    pub fn add_row_broadcast(&mut self, x: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (n, m) = dims(self.value(x));
        let (br, bc) = dims(self.value(b));
        if br != 1 || bc != m {
            return Err(shape_err(
                "add_row_broadcast",
                format!("[{n},{m}] + [{br},{bc}]"),
            ));
        }
        let mut out = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for i in 0..n {
            for j in 0..m {
                out.data_mut()[i * m + j] += bias[j];
            }
        }
        Ok(self.push(Op::AddRowBroadcast, vec![x.0, b.0], out))
    }

    pub fn mul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(
                "mul",
                format!("{:?} * {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        Ok(self.push(Op::Mul, vec![a.0, b.0], out))
    }

    pub fn affine(&mut self, x: NodeRef, a: f64, b: f64) -> NodeRef {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            *o = a * *o + b;
        }
        self.push(Op::Affine { a }, vec![x.0], out)
    }

    pub fn scale(&mut self, x: NodeRef, a: f64) -> NodeRef {
        self.affine(x, a, 0.0)
    }

    pub fn relu(&mut self, x: NodeRef) -> NodeRef {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
        self.push(Op::Relu, vec![x.0], out)
    }

    pub fn tanh(&mut self, x: NodeRef) -> NodeRef {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            *o = o.tanh();
        }
        self.push(Op::Tanh, vec![x.0], out)
    }

    pub fn sigmoid(&mut self, x: NodeRef) -> NodeRef {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            *o = sigmoid(*o);
        }
        self.push(Op::Sigmoid, vec![x.0], out)
    }

    pub fn exp(&mut self, x: NodeRef) -> NodeRef {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            *o = o.exp();
        }
        self.push(Op::Exp, vec![x.0], out)
    }

    pub fn softmax_rows(&mut self, x: NodeRef) -> Result<NodeRef> {
        self.softmax_rows_masked(x, None)
    }

    /// Masked softmax; `mask[i][j] == true` means position j of row i is
    /// allowed. A fully masked row is an error.
    pub fn softmax_rows_masked(&mut self, x: NodeRef, mask: Option<&[bool]>) -> Result<NodeRef> {
        let (n, m) = dims(self.value(x));
        if let Some(b) = mask {
            if b.len() != n * m {
                return Err(shape_err("softmax", "mask length mismatch"));
            }
            for i in 0..n {
                if !b[i * m..(i + 1) * m].iter().any(|&v| v) {
                    return Err(NnError::FullyMaskedRow { row: i });
                }
            }
        }
        let mut out = Tensor::zeros(n, m);
        softmax_rows_kernel(self.value(x).data(), n, m, mask, out.data_mut());
        Ok(self.push(Op::SoftmaxRows, vec![x.0], out))
    }

    pub fn layer_norm(&mut self, x: NodeRef, gain: NodeRef, bias: NodeRef) -> Result<NodeRef> {
        let (n, d) = dims(self.value(x));
        if self.value(gain).shape() != [1, d] || self.value(bias).shape() != [1, d] {
            return Err(shape_err("layer_norm", "gain/bias must be [1, d]"));
        }
        let mut out = Tensor::zeros(n, d);
        layer_norm_kernel(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            n,
            d,
            LAYER_NORM_EPS,
            out.data_mut(),
        );
        Ok(self.push(Op::LayerNorm, vec![x.0, gain.0, bias.0], out))
    }

    pub fn concat_cols(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (ar, ac) = dims(self.value(a));
        let (br, bc) = dims(self.value(b));
        if ar != br {
            return Err(shape_err("concat_cols", format!("{ar} rows vs {br} rows")));
        }
        let mut out = Tensor::zeros(ar, ac + bc);
        for i in 0..ar {
            let dst = &mut out.data_mut()[i * (ac + bc)..(i + 1) * (ac + bc)];
            dst[..ac].copy_from_slice(self.nodes[a.0].value.row(i));
            dst[ac..].copy_from_slice(self.nodes[b.0].value.row(i));
        }
        Ok(self.push(Op::ConcatCols, vec![a.0, b.0], out))
    }

    pub fn slice_cols(&mut self, x: NodeRef, start: usize, len: usize) -> Result<NodeRef> {
        let (n, m) = dims(self.value(x));
        if start + len > m {
            return Err(shape_err(
                "slice_cols",
                format!("{start}..{} of {m} cols", start + len),
            ));
        }
        let mut out = Tensor::zeros(n, len);
        for i in 0..n {
            out.data_mut()[i * len..(i + 1) * len]
                .copy_from_slice(&self.nodes[x.0].value.row(i)[start..start + len]);
        }
        Ok(self.push(Op::SliceCols { start, len }, vec![x.0], out))
    }

    pub fn sum_all(&mut self, x: NodeRef) -> NodeRef {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push(Op::SumAll, vec![x.0], Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, x: NodeRef) -> NodeRef {
        let n = self.value(x).len() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    pub fn rows_dot(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err("rows_dot", "shape mismatch"));
        }
        let (n, d) = dims(self.value(a));
        let mut out = Tensor::zeros(n, 1);
        for i in 0..n {
            let av = self.nodes[a.0].value.row(i);
            let bv = self.nodes[b.0].value.row(i);
            out.data_mut()[i] = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        }
        let _ = d;
        Ok(self.push(Op::RowsDot, vec![a.0, b.0], out))
    }

    /// Numerically stable cross-entropy of a single logit row against `target`.
    pub fn cross_entropy(&mut self, logits: NodeRef, target: usize) -> Result<NodeRef> {
        let (n, c) = dims(self.value(logits));
        if n != 1 {
            return Err(shape_err("cross_entropy", "expects a [1, C] logit row"));
        }
        if target >= c {
            return Err(shape_err("cross_entropy", format!("label {target} >= {c} classes")));
        }
        let row = self.value(logits).data();
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        let loss = lse - row[target];
        Ok(self.push(Op::CrossEntropy { target }, vec![logits.0], Tensor::scalar(loss)))
    }

    /// Mean of `softplus(x) - t * x` over [n,1] logits: binary cross-entropy
    /// against probabilities `sigmoid(x)` without forming the probabilities.
    pub fn bce_with_logits_mean(&mut self, logits: NodeRef, targets: &[f64]) -> Result<NodeRef> {
        let (n, m) = dims(self.value(logits));
        if m != 1 || n != targets.len() {
            return Err(shape_err("bce_with_logits_mean", "logits must be [n,1] matching targets"));
        }
        let data = self.value(logits).data();
        let mut total = 0.0;
        for (i, &x) in data.iter().enumerate() {
            total += softplus(x) - targets[i] * x;
        }
        let loss = total / n as f64;
        Ok(self.push(
            Op::BceLogitsMean {
                targets: targets.to_vec(),
            },
            vec![logits.0],
            Tensor::scalar(loss),
        ))
    }

    /// Reverse sweep from a scalar loss. Populates gradients of every
    /// registered parameter in `store` (zero for parameters the loss never
    /// touched) and consumes the tape.
    pub fn backward(&mut self, loss: NodeRef, store: &mut ParamStore) -> Result<()> {
        if self.consumed {
            return Err(NnError::TapeConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(NnError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            let g_out = std::mem::take(&mut grads[idx]);
            if g_out.iter().all(|&v| v == 0.0) {
                grads[idx] = g_out;
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(idx);
            let node = &rest[0];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::Matmul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (n, k) = dims(&before[a].value);
                    let m = before[b].value.cols();
                    // dA += dC @ B^T ; dB += A^T @ dC
                    matmul_a_bt_acc(&g_out, before[b].value.data(), &mut grads[a], n, m, k);
                    matmul_at_b_acc(before[a].value.data(), &g_out, &mut grads[b], n, k, m);
                }
                Op::Transpose => {
                    let x = node.inputs[0];
                    let (n, m) = dims(&before[x].value);
                    for i in 0..n {
                        for j in 0..m {
                            grads[x][i * m + j] += g_out[j * n + i];
                        }
                    }
                }
                Op::Add => {
                    for &inp in &node.inputs {
                        for (g, &v) in grads[inp].iter_mut().zip(&g_out) {
                            *g += v;
                        }
                    }
                }
                Op::AddRowBroadcast => {
                    let (x, b) = (node.inputs[0], node.inputs[1]);
                    for (g, &v) in grads[x].iter_mut().zip(&g_out) {
                        *g += v;
                    }
                    let m = before[b].value.cols();
                    for (j, v) in g_out.iter().enumerate() {
                        grads[b][j % m] += v;
                    }
                }
                Op::Mul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    for i in 0..g_out.len() {
                        grads[a][i] += g_out[i] * before[b].value.data()[i];
                        grads[b][i] += g_out[i] * before[a].value.data()[i];
                    }
                }
                Op::Affine { a, .. } => {
                    let x = node.inputs[0];
                    for (g, &v) in grads[x].iter_mut().zip(&g_out) {
                        *g += a * v;
                    }
                }
                Op::Relu => {
                    let x = node.inputs[0];
                    for i in 0..g_out.len() {
                        if before[x].value.data()[i] > 0.0 {
                            grads[x][i] += g_out[i];
                        }
                    }
                }
                Op::Tanh => {
                    let x = node.inputs[0];
                    for i in 0..g_out.len() {
                        let y = node.value.data()[i];
                        grads[x][i] += g_out[i] * (1.0 - y * y);
                    }
                }
                Op::Sigmoid => {
                    let x = node.inputs[0];
                    for i in 0..g_out.len() {
                        let y = node.value.data()[i];
                        grads[x][i] += g_out[i] * y * (1.0 - y);
                    }
                }
                Op::Exp => {
                    let x = node.inputs[0];
                    for i in 0..g_out.len() {
                        grads[x][i] += g_out[i] * node.value.data()[i];
                    }
                }
                Op::SoftmaxRows => {
                    let x = node.inputs[0];
                    let (n, m) = dims(&node.value);
                    for i in 0..n {
                        let y = node.value.row(i);
                        let go = &g_out[i * m..(i + 1) * m];
                        let dot: f64 = y.iter().zip(go).map(|(a, b)| a * b).sum();
                        for j in 0..m {
                            grads[x][i * m + j] += y[j] * (go[j] - dot);
                        }
                    }
                }
                Op::LayerNorm => {
                    let (x, gain, bias) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                    let (n, d) = dims(&before[x].value);
                    let gv = before[gain].value.data().to_vec();
                    for i in 0..n {
                        let row = before[x].value.row(i);
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let go = &g_out[i * d..(i + 1) * d];
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let mut dxhat = vec![0.0; d];
                        for j in 0..d {
                            grads[bias][j] += go[j];
                            grads[gain][j] += go[j] * xhat[j];
                            dxhat[j] = go[j] * gv[j];
                        }
                        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            grads[x][i * d + j] +=
                                inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                        }
                    }
                }
                Op::ConcatCols => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (n, ac) = dims(&before[a].value);
                    let bc = before[b].value.cols();
                    for i in 0..n {
                        let go = &g_out[i * (ac + bc)..(i + 1) * (ac + bc)];
                        for j in 0..ac {
                            grads[a][i * ac + j] += go[j];
                        }
                        for j in 0..bc {
                            grads[b][i * bc + j] += go[ac + j];
                        }
                    }
                }
                Op::SliceCols { start, len } => {
                    let x = node.inputs[0];
                    let (n, m) = dims(&before[x].value);
                    for i in 0..n {
                        for j in 0..*len {
                            grads[x][i * m + start + j] += g_out[i * len + j];
                        }
                    }
                }
                Op::SumAll => {
                    let x = node.inputs[0];
                    for g in grads[x].iter_mut() {
                        *g += g_out[0];
                    }
                }
                Op::RowsDot => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (n, d) = dims(&before[a].value);
                    for i in 0..n {
                        for j in 0..d {
                            grads[a][i * d + j] += g_out[i] * before[b].value.data()[i * d + j];
                            grads[b][i * d + j] += g_out[i] * before[a].value.data()[i * d + j];
                        }
                    }
                }
                Op::CrossEntropy { target } => {
                    let x = node.inputs[0];
                    let row = before[x].value.data();
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                    for j in 0..row.len() {
                        let p = (row[j] - mx).exp() / sum;
                        let delta = if j == *target { 1.0 } else { 0.0 };
                        grads[x][j] += g_out[0] * (p - delta);
                    }
                }
                Op::BceLogitsMean { targets } => {
                    let x = node.inputs[0];
                    let n = targets.len() as f64;
                    for (i, t) in targets.iter().enumerate() {
                        let s = sigmoid(before[x].value.data()[i]);
                        grads[x][i] += g_out[0] * (s - t) / n;
                    }
                }
            }
            grads[idx] = g_out;
        }

        store.accumulate_from_tape(self.nodes.iter().enumerate().filter_map(|(i, n)| {
            if let Op::Param(name) = &n.op {
                Some((name.as_str(), grads[i].as_slice()))
            } else {
                None
            }
        }))?;
        store.fill_missing_grads();
        store.check_grads_finite()?;
        Ok(())
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-(x.abs())).exp().ln_1p()
}
