//! Communication-aware scheduling of pipeline + data parallel training
//! over devices joined by a heterogeneous network.
//!
//! The crate is organized bottom-up:
//!
//! - [`netmodel`]: device profiles (delay and bandwidth matrices), scenario
//!   generation, and the symmetrized communication graph.
//! - [`workload`]: per-stage and per-macro-batch communication volumes.
//! - [`combinatorics`]: exact bottleneck matching and open-loop TSP solvers.
//! - [`costmodel`]: the two-level communication cost of a balanced partition.
//! - [`scheduler`]: hybrid genetic search with pluggable local search.
//! - [`evaluation`]: concrete assignments, fixed-layout scoring, baselines.
//! - [`cli`]: the `geosched` command-line front end.

pub mod cli;
pub mod combinatorics;
pub mod costmodel;
mod error;
pub mod evaluation;
pub mod matrix;
pub mod netmodel;
pub mod rng;
pub mod scheduler;
pub mod workload;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use netmodel::{CommGraph, DeviceId, NetworkProfile};
pub use workload::WorkloadSpec;
