//! Self-supervised image pretraining with tripartite patch masks.
//!
//! A student and an EMA teacher see spatially aligned views of each image,
//! reduced to disjoint patch subsets. The student carries mask tokens for a
//! third, hidden subset and is trained to (a) match the teacher's centered,
//! sharpened prototype distribution and (b) reconstruct the pixels behind its
//! mask tokens. Sparse sequences make each step markedly cheaper than a
//! dense two-view baseline at the same image size.

pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod objective;
pub mod evalkit;
pub mod rng;
pub mod scalar;
pub mod trainer;
pub mod views;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;
