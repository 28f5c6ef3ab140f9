//! Experiment orchestration: config schema, subcommand dispatch, artifact
//! emission, and the reference oracles the acceptance suite checks the
//! sampler against.

// `!(x > 0.0)` rejects NaN as well, unlike `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod oracle;
pub mod runner;
