//! Minimal dense-tensor and reverse-mode differentiation core.
//!
//! Everything runs on contiguous `f64` buffers: a [`Tensor`] value type, a
//! [`Graph`] tape that records forward operations and replays them backwards,
//! a [`ParamStore`] holding named parameters with seeded initialization and
//! adaptive-moment updates, and the layer builders (`nn`) the model crates
//! train with: linear, layer norm, softmax, scaled dot-product attention,
//! transformer encoder layer and a gated recurrent cell.

pub mod check;
mod error;
mod graph;
pub mod nn;
mod store;
mod tensor;

pub use error::{NnError, Result};
pub use graph::{Graph, NodeRef};
pub use store::{AdamHyper, Init, Param, ParamStore};
pub use tensor::{layer_norm_rows, softmax_rows, Tensor};
