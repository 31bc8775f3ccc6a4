//! Granulation and degranulation with fuzzy c-means, extended with a
//! per-cluster fuzzification factor vector tuned by particle swarm
//! optimization.
//!
//! The pipeline: fit FCM on training data, evaluate candidate fuzzifier
//! vectors through a composite reconstruction objective (powered memberships,
//! one prototype refinement, degranulation, spectral norm of the residual),
//! and search that objective with a swarm seeded at the uniform vector so the
//! result never falls behind the scalar baseline on the training set.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fcm;
pub mod pipeline;
pub mod pso;
pub mod reconstruction;

pub use error::{Error, ErrorClass, Result};
