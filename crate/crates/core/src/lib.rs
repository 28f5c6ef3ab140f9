//! Simulation engine for spatial birth-and-death processes of lattice
//! animals with quenched random birth rates.
//!
//! The crate is organised around the graphical construction of the
//! interacting process: a *free* (non-interacting) marked Poisson process of
//! cylinders, backward exploration of ancestor clans, and a keep/erase
//! cleaning recursion whose time-zero section is an exact draw from the
//! invariant measure. On top of that sit Monte Carlo estimators for the
//! connectivity function, regularity verdicts for boxes, disorder
//! diagnostics, and the parameter machinery of the multiscale analysis.
//!
//! Modules:
//! - [`lattice`]: sites, rectangular regions and sup-norm geometry on `Z^d`;
//! - [`animal_model`]: animals, interaction functions, halos, geometry;
//! - [`models`]: concrete built-in models (exclusion shapes, area
//!   interaction, Strauss, loss networks, random-cluster weights);
//! - [`environment`]: quenched disorder sampling and diagnostics;
//! - [`free_process`]: cylinder realizations on finite space-time windows;
//! - [`clan`]: ancestor clans, keep/erase, the perfect sampler;
//! - [`connectivity`]: open-path connectivity and regularity estimators;
//! - [`multiscale`]: scaled sequences, parameter feasibility, blocking
//!   probabilities and the scale events;
//! - [`rng`], [`stats`], [`parallel`]: deterministic streams, small
//!   statistics helpers and the replica runner.

// `!(x > 0.0)` is used deliberately in validations: unlike `x <= 0.0` it
// also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod animal_model;
pub mod clan;
pub mod connectivity;
pub mod environment;
pub mod error;
pub mod free_process;
pub mod lattice;
pub mod models;
pub mod multiscale;
pub mod parallel;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
