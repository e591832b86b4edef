//! Hyperbolic graph embeddings with multiscale random-walk wavelet features
//! for protein-protein interaction link prediction.

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod manifold;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
mod stream;
pub mod synthetic;
pub mod trainer;
pub mod wavelet;

pub use error::{Error, Result};
