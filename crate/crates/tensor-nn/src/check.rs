//! Central finite-difference gradient verification. Lives in the library so
//! downstream crates can check their composed losses against the tape.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::store::ParamStore;

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Relative error between a finite-difference estimate and an analytic value.
/// Near-zero pairs compare against a floor so noise does not divide by zero.
pub fn relative_error(fd: f64, analytic: f64) -> f64 {
    let denom = fd.abs().max(analytic.abs()).max(1e-6);
    (fd - analytic).abs() / denom
}

/// Compare tape gradients against central finite differences over every
/// element of every registered parameter.
///
/// `forward` must evaluate the loss purely from the store (no tape state kept
/// between calls); `analytic` maps parameter name to its gradient buffer as
/// produced by `Graph::backward`.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    mut forward: F,
    analytic: &BTreeMap<String, Vec<f64>>,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    let mut checked = 0usize;
    for name in names {
        let base = store.get(&name)?.data().to_vec();
        let grad = analytic
            .get(&name)
            .cloned()
            .unwrap_or_else(|| vec![0.0; base.len()]);
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            store.set_value(&name, &plus)?;
            let f_plus = forward(store)?;
            let mut minus = base.clone();
            minus[i] -= eps;
            store.set_value(&name, &minus)?;
            let f_minus = forward(store)?;
            store.set_value(&name, &base)?;
            let fd = (f_plus - f_minus) / (2.0 * eps);
            let rel = relative_error(fd, grad[i]);
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{name}[{i}] fd={fd:.6e} analytic={:.6e}", grad[i]);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel,
        worst,
        checked,
    })
}

/// Collect the gradients a backward pass left in the store.
pub fn collect_grads(store: &ParamStore) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    for name in store.names() {
        if let Ok(p) = store.param(name) {
            if let Some(g) = p.grad() {
                out.insert(name.to_string(), g.to_vec());
            }
        }
    }
    out
}
