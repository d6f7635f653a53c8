use crate::error::{shape_err, Result};

/// Dense row-major tensor of 64-bit reals.
///
/// All model math stays in two dimensions; vectors are `[1, n]` rows. The
/// optional `grad` buffer is populated for parameters after a backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
            grad: None,
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![v; rows * cols],
            grad: None,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "from_vec",
                format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        Ok(Tensor {
            shape: vec![rows, cols],
            data,
            grad: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(shape_err("from_rows", "no rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(shape_err("from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Tensor::from_vec(rows.len(), cols, data)
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
            grad: None,
        }
    }

    /// Identity matrix, used for identity-initialized adapter layers.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, g: Option<Vec<f64>>) {
        self.grad = g;
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

/// `C = A @ B` accumulated into `out` (must be zeroed by the caller when a
/// fresh product is wanted). axpy ordering keeps the inner loops sequential.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (l, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * m..(l + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// `C += A^T @ B` with A of shape [n, k] (so C is [k, m]).
pub(crate) fn matmul_at_b_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * m..(i + 1) * m];
        for (l, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[l * m..(l + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// `C += A @ B^T` with B of shape [m, k] (so C is [n, m]).
pub(crate) fn matmul_a_bt_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// Row-wise softmax with max-subtraction stabilization. `mask` (row-major,
/// `true` = position allowed) zeroes out disallowed entries.
pub(crate) fn softmax_rows_kernel(x: &[f64], n: usize, m: usize, mask: Option<&[bool]>, out: &mut [f64]) {
    for i in 0..n {
        let row = &x[i * m..(i + 1) * m];
        let mrow = mask.map(|b| &b[i * m..(i + 1) * m]);
        let allowed = |j: usize| mrow.map_or(true, |b| b[j]);
        let mut mx = f64::NEG_INFINITY;
        for j in 0..m {
            if allowed(j) && row[j] > mx {
                mx = row[j];
            }
        }
        let orow = &mut out[i * m..(i + 1) * m];
        let mut sum = 0.0;
        for j in 0..m {
            let e = if allowed(j) { (row[j] - mx).exp() } else { 0.0 };
            orow[j] = e;
            sum += e;
        }
        for v in orow.iter_mut() {
            *v /= sum;
        }
    }
}

/// Pure row-wise softmax. Rows are non-negative and sum to one.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    softmax_rows_kernel(x.data(), x.rows(), x.cols(), None, out.data_mut());
    out
}

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

pub(crate) fn layer_norm_kernel(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    n: usize,
    d: usize,
    eps: f64,
    out: &mut [f64],
) {
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        let orow = &mut out[i * d..(i + 1) * d];
        for j in 0..d {
            orow[j] = gain[j] * (row[j] - mean) * inv + bias[j];
        }
    }
}

/// Pure per-row layer normalization with affine gain/bias.
pub fn layer_norm_rows(x: &Tensor, gain: &[f64], bias: &[f64]) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    layer_norm_kernel(
        x.data(),
        gain,
        bias,
        x.rows(),
        x.cols(),
        LAYER_NORM_EPS,
        out.data_mut(),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_row_stays_uniform() {
        let x = Tensor::row_vector(vec![3.0, 3.0, 3.0, 3.0]);
        let y = softmax_rows(&x);
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_values_do_not_overflow() {
        let x = Tensor::row_vector(vec![0.0, 1000.0]);
        let y = softmax_rows(&x);
        assert!(y.data()[0] < 1e-300);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_frozen_values() {
        // direct evaluation: e^1, e^2, e^3 normalized
        let y = softmax_rows(&Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        let expect = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219];
        for (a, b) in y.data().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_constant_row_is_bias() {
        let x = Tensor::row_vector(vec![5.0, 5.0, 5.0]);
        let y = layer_norm_rows(&x, &[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]);
        for &v in y.data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_already_normalized_row() {
        let x = Tensor::row_vector(vec![-1.0, 1.0]);
        let y = layer_norm_rows(&x, &[1.0, 1.0], &[0.0, 0.0]);
        // variance 1, so output is (-1, 1) up to the epsilon inside the root
        assert!((y.data()[0] + 1.0).abs() < 1e-4);
        assert!((y.data()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_matches_two_pass_oracle() {
        let vals = vec![0.3, -1.2, 2.4, 0.9, -0.4];
        let x = Tensor::row_vector(vals.clone());
        let gain = [1.3, 0.7, -0.2, 1.0, 2.0];
        let bias = [0.1, 0.0, -0.5, 0.2, 0.0];
        let y = layer_norm_rows(&x, &gain, &bias);
        let mean: f64 = vals.iter().sum::<f64>() / 5.0;
        let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        for j in 0..5 {
            let expect = gain[j] * (vals[j] - mean) / (var + LAYER_NORM_EPS).sqrt() + bias[j];
            assert!((y.data()[j] - expect).abs() < 1e-12);
        }
    }
}
