//! Domain types for GPS trajectories, road segments, routes and functional
//! zones, with file parsing/serialization and trajectory-to-route snapping.
//!
//! Everything here is immutable after construction; operations are pure
//! functions and safe to call from multiple threads.

pub mod geo;
mod parse;
mod snap;
mod types;

pub use parse::{
    parse_road_network, parse_trajectories, serialize_road_network, serialize_trajectories,
};
pub use snap::{snap_to_route, SnapConfig};
pub use types::{
    validate_trajectory, FunctionalZoneVector, GpsPoint, RoadNetwork, RoadSegment, Route,
    SegmentAttrs, Trajectory, TrajectorySet,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: field `{field}` out of range: {value}")]
    Range {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("trajectory `{id}`: {problems:?}")]
    InvalidTrajectory { id: String, problems: Vec<String> },
    #[error("point {index} has no road segment within {radius_m} m")]
    UnmatchedPoint { index: usize, radius_m: f64 },
    #[error("segments `{from}` and `{to}` are not connected in the network")]
    Disconnected { from: String, to: String },
    #[error("unknown segment id `{0}`")]
    UnknownSegment(String),
    #[error("network: {0}")]
    Network(String),
    #[error("route breaks connectivity between `{from}` and `{to}`")]
    RouteConnectivity { from: String, to: String },
    #[error("zone vector must sum to 1, got {0}")]
    ZoneSum(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrajError>;
