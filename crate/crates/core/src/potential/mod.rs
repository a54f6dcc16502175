//! Discrete potential theory: killed Green functions, equilibrium measures
//! and capacities, on finite subsets of `Z^D` and on cylinder slabs.

mod capacity;
mod cylinder;
mod domain;
mod solver;

pub use capacity::{
    CAP_ORIGIN_Z3,
    capacity_infinite, capacity_mc, ensure_contained, equilibrium_measure, escape_mc,
    escape_probabilities, green_columns, green_function, hitting_probability, CapacityMethod,
    CapacityReport, EscapeMcOptions, EscapeMcReport, InfiniteCapacityOptions,
};
pub use cylinder::{
    cylinder_relative_capacity, hitting_probability_mc, hitting_probability_uniform_start,
    CylinderCapacityOptions, Slab, UniformStartHitting,
};
pub use domain::{FiniteDomain, Geometry};
pub use solver::{KilledWalkOperator, SolveInfo, SolverOptions, NONE};
