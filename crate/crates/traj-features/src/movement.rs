use crate::kinematics::{KinematicSeries, NUM_QUANTITIES};
use crate::{FeatureError, Result};

pub const STATS_PER_QUANTITY: usize = 7;
/// 5 quantities x 7 statistics.
pub const MOVEMENT_DIM: usize = NUM_QUANTITIES * STATS_PER_QUANTITY;

/// Sliding-window statistics over the kinematic series. Each window yields a
/// 35-dim vector: [mean, min, max, std, q25, q50, q75] per quantity, in the
/// fixed order speed, accel, speed_diff, accel_diff, angle_speed.
pub fn movement_features(
    series: &KinematicSeries,
    window: usize,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    if window < 2 || stride < 1 {
        return Err(FeatureError::BadWindow);
    }
    let n = series.len();
    if n < window {
        return Err(FeatureError::TooShort { len: n, window });
    }
    let count = (n - window) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let mut vec = Vec::with_capacity(MOVEMENT_DIM);
        for q in 0..NUM_QUANTITIES {
            let slice = &series.quantity(q)[start..start + window];
            vec.extend_from_slice(&window_stats(slice));
        }
        out.push(vec);
    }
    Ok(out)
}

fn window_stats(xs: &[f64]) -> [f64; STATS_PER_QUANTITY] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = *sorted.last().unwrap();
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    [
        mean,
        min,
        max,
        var.sqrt(),
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.50),
        quantile(&sorted, 0.75),
    ]
}

/// Linear-interpolation quantile of a sorted slice.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
