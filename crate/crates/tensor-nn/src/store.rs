use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Initialization scheme for a registered parameter.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = rows.
    FanIn,
    Zeros,
    Ones,
    /// Identity matrix (square shapes only).
    Identity,
    Const(f64),
}

#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
    seed: u64,
}

impl Param {
    pub fn grad(&self) -> Option<&[f64]> {
        self.value.grad()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Default::default()
        }
    }
}

/// Named parameter tensors with seeded initialization and adaptive-moment
/// optimizer state. Iteration order is the name order (BTreeMap), which keeps
/// every pass over the store deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    base_seed: u64,
    steps: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: BTreeMap::new(),
            base_seed: seed,
            steps: 0,
        }
    }

    pub fn register(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        let seed = splitmix64(self.base_seed ^ fnv1a(name.as_bytes()));
        let mut t = Tensor::zeros(rows, cols);
        match init {
            Init::FanIn => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let bound = 1.0 / (rows as f64).sqrt();
                for v in t.data_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            Init::Zeros => {}
            Init::Ones => t.data_mut().fill(1.0),
            Init::Identity => {
                if rows != cols {
                    return Err(NnError::Shape {
                        op: "register",
                        detail: format!("identity init needs square shape, got {rows}x{cols}"),
                    });
                }
                t = Tensor::identity(rows);
            }
            Init::Const(c) => t.data_mut().fill(c),
        }
        let n = t.len();
        self.params.insert(
            name.to_string(),
            Param {
                value: t,
                m: vec![0.0; n],
                v: vec![0.0; n],
                seed,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    /// Overwrite a parameter's values, keeping shape. Test and setup helper.
    pub fn set_value(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        if p.value.len() != data.len() {
            return Err(NnError::Shape {
                op: "set_value",
                detail: format!("{} has {} values, got {}", name, p.value.len(), data.len()),
            });
        }
        p.value.data_mut().copy_from_slice(data);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn clear_grads(&mut self) {
        for p in self.params.values_mut() {
            p.value.set_grad(None);
        }
    }

    pub(crate) fn accumulate_from_tape<'a>(
        &mut self,
        grads: impl Iterator<Item = (&'a str, &'a [f64])>,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = self
                .params
                .get_mut(name)
                .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
            match p.value.grad() {
                Some(_) => {
                    let mut cur = p.value.grad().unwrap().to_vec();
                    for (c, &v) in cur.iter_mut().zip(g) {
                        *c += v;
                    }
                    p.value.set_grad(Some(cur));
                }
                None => p.value.set_grad(Some(g.to_vec())),
            }
        }
        Ok(())
    }

    pub(crate) fn fill_missing_grads(&mut self) {
        for p in self.params.values_mut() {
            if p.value.grad().is_none() {
                let n = p.value.len();
                p.value.set_grad(Some(vec![0.0; n]));
            }
        }
    }

    pub(crate) fn check_grads_finite(&self) -> Result<()> {
        for (name, p) in &self.params {
            if let Some(g) = p.value.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NnError::NonFinite(format!("gradient of `{name}`")));
                }
            }
        }
        Ok(())
    }

    /// Standard adaptive-moment update with bias correction. Consumes the
    /// gradients, so stepping again before another backward pass errors.
    pub fn adam_step(&mut self, hyper: &AdamHyper) -> Result<()> {
        for (name, p) in &self.params {
            if p.value.grad().is_none() {
                return Err(NnError::StepBeforeBackward(name.clone()));
            }
        }
        let t = (self.steps + 1) as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        for p in self.params.values_mut() {
            let g = p.value.grad().unwrap().to_vec();
            for i in 0..g.len() {
                p.m[i] = hyper.beta1 * p.m[i] + (1.0 - hyper.beta1) * g[i];
                p.v[i] = hyper.beta2 * p.v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
                let mhat = p.m[i] / bc1;
                let vhat = p.v[i] / bc2;
                p.value.data_mut()[i] -= hyper.lr * mhat / (vhat.sqrt() + hyper.eps);
            }
            p.value.set_grad(None);
        }
        self.steps += 1;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Named-tensor container: manifest of (name, shape, seed, dtype) followed
    /// by the raw little-endian f64 payload in manifest order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"TNN1")?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        w.write_all(&self.base_seed.to_le_bytes())?;
        for (name, p) in &self.params {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u16).to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&(p.value.rows() as u32).to_le_bytes())?;
            w.write_all(&(p.value.cols() as u32).to_le_bytes())?;
            w.write_all(&p.seed.to_le_bytes())?;
            w.write_all(&[0u8])?; // dtype 0 = f64
        }
        for p in self.params.values() {
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TNN1" {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let count = read_u32(&mut r)? as usize;
        let base_seed = read_u64(&mut r)?;
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u16(&mut r)? as usize;
            let mut nb = vec![0u8; name_len];
            r.read_exact(&mut nb)?;
            let name = String::from_utf8(nb).map_err(|_| NnError::Checkpoint("bad name".into()))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let seed = read_u64(&mut r)?;
            let mut dtype = [0u8; 1];
            r.read_exact(&mut dtype)?;
            if dtype[0] != 0 {
                return Err(NnError::Checkpoint(format!("unsupported dtype {}", dtype[0])));
            }
            manifest.push((name, rows, cols, seed));
        }
        let mut params = BTreeMap::new();
        for (name, rows, cols, seed) in manifest {
            let n = rows * cols;
            let mut data = vec![0.0; n];
            for v in data.iter_mut() {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            params.insert(
                name,
                Param {
                    value: Tensor::from_vec(rows, cols, data).map_err(|e| {
                        NnError::Checkpoint(format!("payload shape: {e}"))
                    })?,
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                    seed,
                },
            );
        }
        Ok(ParamStore {
            params,
            base_seed,
            steps: 0,
        })
    }
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Stable string hash for deriving per-parameter seeds.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates derived seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_registration_rejected() {
        let mut s = ParamStore::new(1);
        s.register("w", 2, 2, Init::FanIn).unwrap();
        assert!(matches!(
            s.register("w", 2, 2, Init::FanIn),
            Err(NnError::DuplicateParam(_))
        ));
    }

    #[test]
    fn init_is_deterministic_per_seed_and_name() {
        let mut a = ParamStore::new(7);
        let mut b = ParamStore::new(7);
        a.register("w", 3, 4, Init::FanIn).unwrap();
        b.register("w", 3, 4, Init::FanIn).unwrap();
        assert_eq!(a.get("w").unwrap().data(), b.get("w").unwrap().data());
        let mut c = ParamStore::new(8);
        c.register("w", 3, 4, Init::FanIn).unwrap();
        assert_ne!(a.get("w").unwrap().data(), c.get("w").unwrap().data());
    }

    #[test]
    fn step_before_backward_errors() {
        let mut s = ParamStore::new(1);
        s.register("w", 2, 2, Init::FanIn).unwrap();
        assert!(matches!(
            s.adam_step(&AdamHyper::default()),
            Err(NnError::StepBeforeBackward(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut s = ParamStore::new(42);
        s.register("a.w", 3, 5, Init::FanIn).unwrap();
        s.register("a.b", 1, 5, Init::Zeros).unwrap();
        let dir = std::env::temp_dir().join("tnn_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.tnn");
        s.save(&path).unwrap();
        let loaded = ParamStore::load(&path).unwrap();
        for name in s.names() {
            assert_eq!(s.get(name).unwrap(), loaded.get(name).unwrap());
        }
    }
}
