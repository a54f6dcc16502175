//! Monte Carlo laboratory for the simple random walk on the discrete
//! cylinder `(Z/NZ)^d x Z`, the vacant set it leaves behind, and the random
//! interlacement picture that describes that vacant set locally.

pub mod brownian;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod interlacement;
pub mod lattice;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
