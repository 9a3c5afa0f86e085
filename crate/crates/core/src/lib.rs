//! Quadrotor controller-performance prediction and online tuning toolkit.
//!
//! The crate is organized around a batched rigid-body simulator (`sim`),
//! an SE(3) geometric tracking controller (`controller`), polynomial spline
//! trajectories with nullspace-preserving adaptation (`spline`), rollout
//! performance metrics (`metrics`), a from-scratch MLP performance
//! predictor (`mlp`, `predictor`, `train`), random-search gain optimization
//! (`tuner`), gradient-based trajectory adaptation (`adapter`), and the
//! dataset generation pipeline (`datagen`).

pub mod adapter;
pub mod controller;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod predictor;
pub mod params;
pub mod sim;
pub mod spline;
pub mod state;
pub mod train;
pub mod tuner;

pub use controller::{FlatReference, Gains};
pub use error::{Error, Result};
pub use math::{Mat3, Quat, Vec3};
pub use params::QuadParams;
pub use sim::StateLog;
pub use state::{BatchState, QuadState, RotorCommand};

