use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rng::derive_seed;
use crate::{GenError, Result};

/// Route selection preference weights; sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutePref {
    pub weight_shortest: f64,
    pub weight_fastest: f64,
    pub weight_habit: f64,
}

/// Synthetic driver: speed behavior, route selection preference, preferred
/// destination zone category and departure-time distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverProfile {
    pub user: String,
    /// Cruise speed mean, m/s.
    pub speed_mean: f64,
    /// Per-segment cruise speed spread, m/s.
    pub speed_std: f64,
    /// Within-segment speed jitter, m/s^2.
    pub accel_jitter: f64,
    pub route_pref: RoutePref,
    /// Preferred destination land-use category index.
    pub habit_zones: usize,
    /// 24-bin departure-hour distribution; sums to one.
    pub departure_dist: Vec<f64>,
}

impl DriverProfile {
    pub fn validate(&self) -> Result<()> {
        if self.speed_mean <= 0.0 {
            return Err(GenError::Spec(format!(
                "profile `{}`: speed_mean must be positive",
                self.user
            )));
        }
        let w = self.route_pref;
        let sum = w.weight_shortest + w.weight_fastest + w.weight_habit;
        if (sum - 1.0).abs() > 1e-9
            || w.weight_shortest < 0.0
            || w.weight_fastest < 0.0
            || w.weight_habit < 0.0
        {
            return Err(GenError::Spec(format!(
                "profile `{}`: route preference weights must be non-negative and sum to 1",
                self.user
            )));
        }
        if self.departure_dist.len() != 24
            || (self.departure_dist.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(GenError::Spec(format!(
                "profile `{}`: departure distribution must have 24 bins summing to 1",
                self.user
            )));
        }
        Ok(())
    }

    /// Draw a diverse, deterministic profile for user index `idx`. Profiles
    /// differ moderately in speed, strongly in route preference and habit
    /// zone, and mildly in departure time, so no single modality separates
    /// drivers on its own.
    pub fn sample(user: &str, idx: usize, zone_categories: usize, base_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, &[17, idx as u64]));

        let speed_mean = rng.gen_range(8.0..16.0);
        let speed_std = rng.gen_range(0.8..2.0);
        let accel_jitter = rng.gen_range(0.3..1.0);

        // one dominant preference per driver
        let dominant = rng.gen_range(0..3usize);
        let main = 0.55 + 0.3 * rng.gen::<f64>();
        let rest = 1.0 - main;
        let split = rng.gen_range(0.2..0.8);
        let mut w = [rest * split, rest * (1.0 - split), main];
        w.rotate_right(dominant);
        let route_pref = RoutePref {
            weight_shortest: w[0],
            weight_fastest: w[1],
            weight_habit: w[2],
        };

        let habit_zones = rng.gen_range(0..zone_categories);

        // two soft departure peaks per driver
        let peak1 = rng.gen_range(6.0..10.0);
        let peak2 = rng.gen_range(15.0..20.0);
        let mix = rng.gen_range(0.3..0.7);
        let width = rng.gen_range(1.0..2.5);
        let mut departure: Vec<f64> = (0..24)
            .map(|h| {
                let g = |peak: f64| (-((h as f64 - peak).powi(2)) / (2.0 * width * width)).exp();
                0.01 + mix * g(peak1) + (1.0 - mix) * g(peak2)
            })
            .collect();
        let total: f64 = departure.iter().sum();
        for v in departure.iter_mut() {
            *v /= total;
        }
        let correction: f64 = 1.0 - departure.iter().sum::<f64>();
        departure[0] += correction;

        DriverProfile {
            user: user.to_string(),
            speed_mean,
            speed_std,
            accel_jitter,
            route_pref,
            habit_zones,
            departure_dist: departure,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_profiles_validate() {
        for i in 0..20 {
            let p = DriverProfile::sample(&format!("u{i}"), i, 5, 42);
            p.validate().unwrap();
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = DriverProfile::sample("u3", 3, 5, 42);
        let b = DriverProfile::sample("u3", 3, 5, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_weights_rejected() {
        let mut p = DriverProfile::sample("u0", 0, 5, 1);
        p.route_pref.weight_shortest += 0.5;
        assert!(p.validate().is_err());
    }
}
