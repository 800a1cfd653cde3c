//! Multi-modal mmWave beam prediction at desk scale.
//!
//! The crate simulates a base station with an antenna array and a co-located
//! camera serving a vehicle driving along a road. It builds DFT beam
//! codebooks, synthesizes line-of-sight channels from geometry, labels each
//! scene sample with its optimal beam, and trains three from-scratch MLP
//! classifiers (vision-only, position-only, and fused vision-position) to
//! predict that beam from sensor data alone. Evaluation reports top-1/2/3
//! accuracy tables and dataset-fraction sweeps.
//!
//! Core math is generic over the scalar type via [`scalar::Real`]
//! (implemented for `f32` and `f64`); all public types default to `f64`.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod phy;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete `f64` aliases for the main domain types.
pub type Codebook = phy::Codebook<f64>;
pub type Channel = phy::Channel<f64>;
pub type ArrayGeometry = phy::ArrayGeometry<f64>;
pub type SceneConfig = scene::SceneConfig<f64>;
pub type Sample = data::Sample<f64>;
pub type Dataset = data::Dataset<f64>;
pub type NormStats = data::NormStats<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type TrainConfig = nn::TrainConfig<f64>;
pub type Prediction = models::Prediction<f64>;
pub type EvalReport = eval::EvalReport<f64>;
