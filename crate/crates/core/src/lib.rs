//! Training coordinate networks with NTK-guided coordinate selection.
//!
//! A signal (image, audio clip or synthetic field) becomes a set of
//! coordinate/value pairs. A sine or ReLU MLP is fitted to it by mini-batch
//! steps whose batches are chosen each iteration by one of several
//! strategies, including a hybrid that ranks coordinates by how strongly
//! their update would move the whole function through the network's neural
//! tangent kernel.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual `f64` choice.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;
pub mod network;
pub mod ntk;
pub mod parallel;
pub mod sampler;
pub mod scalar;
pub mod signal;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = signal::SignalDataset<f64>;
pub type Dataset32 = signal::SignalDataset<f32>;
pub type Params = network::MlpParams<f64>;
pub type Params32 = network::MlpParams<f32>;
pub type Ntk = ntk::NtkMatrix<f64>;
pub type Scores = ntk::ScoreVector<f64>;
pub type Metrics = metrics::MetricRecord<f64>;
pub type Selection = sampler::SelectionState<f64>;
