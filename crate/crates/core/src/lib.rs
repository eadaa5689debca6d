//! Tennis points as an absorbing Markov reward process over court positions,
//! and the decision process obtained by letting Player A choose where to aim
//! while execution error blurs the aim.

pub mod calibration;
pub mod distfit;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod rng;
pub mod shotgen;
pub mod solver;
pub mod state;
pub mod transitions;

pub use error::{Error, Result};
