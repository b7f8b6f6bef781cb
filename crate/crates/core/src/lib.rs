//! Simultaneous null control of the Dirichlet and Neumann heat equations on
//! `[0, L]` with one shared control, obtained by controlling a single heat
//! equation on the doubled (periodic) domain and splitting the result into
//! its odd and even parts.
//!
//! Module map:
//!
//! * [`grid`]: cell-centered grid, density weights, control regions.
//! * [`operators`]: Dirichlet / Neumann / periodic operators and eigenbases.
//! * [`spectral`]: spectral projectors and discrete norms.
//! * [`doubling`]: the doubled domain, extension and splitting maps.
//! * [`specineq`]: exact discrete constants of the spectral inequalities.
//! * [`control`]: Gramian (HUM) and Lebeau–Robbiano control synthesis.
//! * [`sim`]: exact propagation and the end-to-end simultaneous experiment.
//! * [`cli`]: experiment configuration and the command implementations.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod doubling;
pub mod error;
pub mod grid;
pub mod operators;
pub mod sim;
pub mod specineq;
pub mod spectral;

pub use error::{Error, Result};
