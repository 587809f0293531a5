//! Reservoir computing for Hamiltonian dynamics.
//!
//! A parameter-aware echo-state network learns the dynamics of conservative
//! systems from time series labeled by a control parameter, then runs
//! closed-loop to predict short-term evolution, replicate long-term climate,
//! and reconstruct KAM dynamics diagrams at parameter values never seen in
//! training. Ground-truth generators (a double-pendulum integrator and the
//! Chirikov standard map), climate diagnostics, persistence, and experiment
//! orchestration live alongside the network itself.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hyperopt;
pub mod io;
pub mod models;
pub mod prediction;
pub mod reservoir;
pub mod sparse;
pub mod training;

pub use error::{Error, Result};
pub use reservoir::{Reservoir, ReservoirConfig, ReservoirState};
pub use training::{Corpus, TrainedModel, TrajectorySegment};
