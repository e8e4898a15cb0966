//! Federated graph convolutional network training with a single round of
//! pre-training neighbor-feature aggregation.

pub mod analysis;
pub mod error;
pub mod federation;
pub mod gcn;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod secure;
pub mod wire;

pub use error::{Error, Result};
