//! Feature modality decoupling: a (trajectory, route) pair becomes three
//! independent model inputs — a movement statistics window sequence, a
//! per-segment route feature sequence, and one global semantic vector.

mod cache;
mod global;
mod kinematics;
mod movement;
mod normalize;
mod route;

pub use cache::{read_feature_cache, write_feature_cache, FeatureCache};
pub use global::global_features;
pub use kinematics::{kinematics, KinematicSeries};
pub use movement::{movement_features, MOVEMENT_DIM};
pub use normalize::NormStats;
pub use route::{route_dim, route_features, segment_features};

use thiserror::Error;
use traj_core::{RoadNetwork, Route, Trajectory};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("zero time delta between points {0} and {1}")]
    ZeroTimeDelta(usize, usize),
    #[error("series of length {len} shorter than window {window}")]
    TooShort { len: usize, window: usize },
    #[error("window must be >= 2 and stride >= 1")]
    BadWindow,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error(transparent)]
    Traj(#[from] traj_core::TrajError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("feature cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Tunables for feature extraction.
#[derive(Debug, Clone, Copy)]
pub struct FeatureConfig {
    /// Sliding window length in points.
    pub window: usize,
    /// Window stride in points.
    pub stride: usize,
    /// Radius for functional-zone lookup around origin/destination, meters.
    pub buffer_m: f64,
    /// Number of road classes C (one-hot width).
    pub road_classes: usize,
    /// Number of land-use categories K.
    pub zone_categories: usize,
    /// Dataset-wide reference origin for location encoding.
    pub ref_origin: (f64, f64),
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 8,
            stride: 4,
            buffer_m: 200.0,
            road_classes: 5,
            zone_categories: 5,
            ref_origin: (39.90, 116.30),
        }
    }
}

/// Meters-to-feature-unit scale for locations and sizes.
pub(crate) const LOCATION_SCALE: f64 = 1e-4;

/// Which side of the user split a trajectory is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Decoupled modality features of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFeatures {
    pub traj_id: String,
    pub user: String,
    pub split: Split,
    /// L_m x 35 movement window statistics.
    pub movement: Vec<Vec<f64>>,
    /// L_r x D_r per-segment vectors, route order.
    pub route: Vec<Vec<f64>>,
    /// Segment ids matching `route` rows.
    pub segment_ids: Vec<String>,
    /// D_g global semantic vector.
    pub global: Vec<f64>,
}

/// Full decoupling of one trajectory. Kinematic series shorter than one
/// window are zero-padded up to it so very short trips still featurize.
pub fn featurize_trajectory(
    traj: &Trajectory,
    route: &Route,
    network: &RoadNetwork,
    split: Split,
    cfg: &FeatureConfig,
) -> Result<TrajectoryFeatures> {
    let mut series = kinematics(traj)?;
    if series.len() < cfg.window {
        series.pad_to(cfg.window);
    }
    let movement = movement_features(&series, cfg.window, cfg.stride)?;
    let route_feats = route_features(route, network, cfg)?;
    let global = global_features(traj, route, &series, network, cfg)?;
    Ok(TrajectoryFeatures {
        traj_id: traj.id.clone(),
        user: traj.user.clone(),
        split,
        movement,
        route: route_feats,
        segment_ids: route.segments.clone(),
        global,
    })
}

/// Global feature dimension for a configuration.
pub fn global_dim(cfg: &FeatureConfig) -> usize {
    50 + 3 * cfg.zone_categories
}
