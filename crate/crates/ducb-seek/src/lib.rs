//! Distributed multi-agent on-line extremum seeking on a lattice field.
//!
//! A network of agents tracks the moving peaks of an unknown, linearly
//! evolving scalar field. Each step the agents measure at their current
//! cells, fuse the readings into a shared Kalman belief over the whole
//! field, form per-cell upper confidence bounds, and move to the cells with
//! the largest bounds. The crate bundles:
//!
//! - [`environment`]: the lattice, the LTV field dynamics, and a
//!   convection-diffusion scenario generator;
//! - [`sensing`]: pointwise/circular measurement matrices and noisy draws;
//! - [`consensus`]: exact fusion of per-agent information over a
//!   communication graph;
//! - [`estimation`]: the information-form Kalman recursion plus its
//!   measurement-history closed form (a test oracle);
//! - [`ducb`]: the confidence schedule and the per-cell upper bounds;
//! - [`planning`]: top-I planners, the sweep baseline, and brute-force
//!   oracles;
//! - [`evaluation`]: episode runner, Monte-Carlo aggregation, regret
//!   diagnostics;
//! - [`scenario`] / [`config`] / [`output`]: experiment configuration, CSV
//!   traces, and SVG regret plots for the CLI.

pub mod config;
pub mod consensus;
pub mod ducb;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod linalg;
pub mod output;
pub mod planning;
pub mod scenario;
pub mod sensing;

pub use error::{Error, Result};
