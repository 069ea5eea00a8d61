//! Body-reservoir governance agents for the repeated continuous prisoner's
//! dilemma: an echo-state "body", a cognitive filter and an adaptive
//! sentinel that mixes the two.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod body;
pub mod error;
pub mod game;
pub mod governance;
pub mod reservoir;
pub mod rng;
pub mod sim;

pub use error::{BrgError, Result};
