//! Seeded synthetic road network and driver-trajectory generator. Produces
//! labeled GPS data with controllable driver distinguishability: per-driver
//! speed profiles, route selection preferences (shortest / fastest / habit)
//! and departure-time distributions.

mod dataset;
mod network;
mod profile;
mod rng;

pub use dataset::{generate_dataset, GenParams};
pub use network::{generate_network, NetworkSpec};
pub use profile::DriverProfile;
pub use rng::derive_seed;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("network is disconnected: no route from {from} to {to}")]
    Disconnected { from: String, to: String },
    #[error(transparent)]
    Traj(#[from] traj_core::TrajError),
}

pub type Result<T> = std::result::Result<T, GenError>;
