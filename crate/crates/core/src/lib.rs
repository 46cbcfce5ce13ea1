//! Cooperative driving-risk engine.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! * [`scenario`]: scene data model, seeded scenario generation, rigid
//!   transforms and oriented-box geometry.
//! * [`fusion`]: per-agent sensing with noise, V2X delay, late fusion by
//!   non-maximum suppression and track-history assembly.
//! * [`prediction`]: multi-modal Gaussian-mixture trajectory distributions
//!   and scene-consistency reweighting.
//! * [`riskmap`]: the severity/exposure risk field, its Gaussian-mixture
//!   expectation and rasterisation into per-timestamp risk maps.
//! * [`planner`]: gradient-descent MPC over a linearised bicycle model whose
//!   cost embeds the risk map.
//!
//! [`eval`] holds the metric suite and the end-to-end [`eval::run_pipeline`].

pub mod error;
pub mod eval;
pub mod fusion;
pub mod planner;
pub mod prediction;
pub mod riskmap;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};

/// Frame period of every stream in the engine (2 Hz).
pub const FRAME_DT: f64 = 0.5;
