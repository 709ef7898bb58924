//! Linear mode connectivity and layerwise linear feature connectivity for
//! small ReLU networks: deterministic training, spawning and permutation
//! matching, interpolation metrics, and the sufficient-condition
//! diagnostics (weak additivity, commutativity, stitching, stable rank).

pub mod conditions;
pub mod connectivity;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod permutation;
pub mod rng;

pub use error::{Error, Result};
