use crate::{Result, TrajectoryFeatures};

/// Per-dimension z-score statistics for the three modalities, fitted on the
/// training split once and applied everywhere. Dimensions with (near-)zero
/// spread normalize to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub movement: Vec<(f64, f64)>,
    pub route: Vec<(f64, f64)>,
    pub global: Vec<(f64, f64)>,
}

const MIN_STD: f64 = 1e-12;

impl NormStats {
    /// Fit on training rows only.
    pub fn fit<'a>(records: impl Iterator<Item = &'a TrajectoryFeatures> + Clone) -> Result<Self> {
        let movement = fit_dims(records.clone().flat_map(|r| r.movement.iter()));
        let route = fit_dims(records.clone().flat_map(|r| r.route.iter()));
        let global = fit_dims(records.map(|r| &r.global));
        Ok(NormStats {
            movement,
            route,
            global,
        })
    }

    pub fn apply(&self, record: &mut TrajectoryFeatures) {
        for row in record.movement.iter_mut() {
            apply_dims(row, &self.movement);
        }
        for row in record.route.iter_mut() {
            apply_dims(row, &self.route);
        }
        apply_dims(&mut record.global, &self.global);
    }
}

fn fit_dims<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Vec<(f64, f64)> {
    let mut sums: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for row in rows {
        if sums.is_empty() {
            sums = vec![0.0; row.len()];
            sq = vec![0.0; row.len()];
        }
        for (i, &v) in row.iter().enumerate() {
            sums[i] += v;
            sq[i] += v * v;
        }
        count += 1;
    }
    let n = count.max(1) as f64;
    sums.iter()
        .zip(&sq)
        .map(|(&s, &s2)| {
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0);
            (mean, var.sqrt())
        })
        .collect()
}

fn apply_dims(row: &mut [f64], stats: &[(f64, f64)]) {
    for (v, (mean, std)) in row.iter_mut().zip(stats) {
        *v = if *std < MIN_STD {
            0.0
        } else {
            (*v - mean) / std
        };
    }
}
