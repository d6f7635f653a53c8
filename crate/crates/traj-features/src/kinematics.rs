use traj_core::geo::{bearing_rad, haversine_m, wrap_angle};
use traj_core::Trajectory;

use crate::{FeatureError, Result};

/// Per-point kinematic quantities, tail entries zero-padded so every series
/// has the trajectory's length.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSeries {
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
    pub speed_diff: Vec<f64>,
    pub accel_diff: Vec<f64>,
    pub angle_speed: Vec<f64>,
}

impl KinematicSeries {
    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }

    pub fn quantity(&self, idx: usize) -> &[f64] {
        match idx {
            0 => &self.speed,
            1 => &self.accel,
            2 => &self.speed_diff,
            3 => &self.accel_diff,
            4 => &self.angle_speed,
            _ => panic!("kinematic quantity index out of range"),
        }
    }

    pub(crate) fn pad_to(&mut self, len: usize) {
        for q in [
            &mut self.speed,
            &mut self.accel,
            &mut self.speed_diff,
            &mut self.accel_diff,
            &mut self.angle_speed,
        ] {
            q.resize(len.max(q.len()), 0.0);
        }
    }
}

pub const NUM_QUANTITIES: usize = 5;

/// Derive speed, acceleration, their differences and bearing-change rate by
/// successive differencing over great-circle displacements.
pub fn kinematics(traj: &Trajectory) -> Result<KinematicSeries> {
    let pts = &traj.points;
    let n = pts.len();
    let mut dt = vec![0.0; n];
    for i in 0..n - 1 {
        let delta = (pts[i + 1].t - pts[i].t) as f64;
        if delta == 0.0 {
            return Err(FeatureError::ZeroTimeDelta(i, i + 1));
        }
        dt[i] = delta;
    }

    let mut speed = vec![0.0; n];
    for i in 0..n - 1 {
        speed[i] = haversine_m(pts[i].position(), pts[i + 1].position()) / dt[i];
    }
    let mut accel = vec![0.0; n];
    let mut speed_diff = vec![0.0; n];
    for i in 0..n.saturating_sub(2) {
        speed_diff[i] = speed[i + 1] - speed[i];
        accel[i] = speed_diff[i] / dt[i];
    }
    let mut accel_diff = vec![0.0; n];
    for i in 0..n.saturating_sub(3) {
        accel_diff[i] = accel[i + 1] - accel[i];
    }
    let mut angle_speed = vec![0.0; n];
    for i in 0..n.saturating_sub(2) {
        let b1 = bearing_rad(pts[i].position(), pts[i + 1].position());
        let b2 = bearing_rad(pts[i + 1].position(), pts[i + 2].position());
        angle_speed[i] = wrap_angle(b2 - b1).abs() / dt[i];
    }
    Ok(KinematicSeries {
        speed,
        accel,
        speed_diff,
        accel_diff,
        angle_speed,
    })
}
