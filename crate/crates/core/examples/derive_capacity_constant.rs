//! Derives the pinned value of cap({0}) in Z^3 from two independent
//! estimates: exact solves on nested boxes with extrapolation, and
//! simulated escape probabilities with a kill-radius correction.
//!
//! cargo run --release -p cylwalk --example derive_capacity_constant [walkers]

use std::time::Instant;

use cylwalk::lattice::Pattern;
use cylwalk::potential::{capacity_infinite, escape_mc, EscapeMcOptions, InfiniteCapacityOptions, CAP_ORIGIN_Z3};

fn main() {
    let walkers: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200_000);
    let k = Pattern::origin(3);

    let t = Instant::now();
    let boxes = capacity_infinite(&k, &InfiniteCapacityOptions::default()).expect("box solves");
    println!(
        "extrapolated  cap = {:.8}  (fit error {:.2e}, {:.1}s)",
        boxes.capacity,
        boxes.error,
        t.elapsed().as_secs_f64()
    );
    println!("  box capacities: {}", boxes.details["box_capacities"]);

    let t = Instant::now();
    let mc = escape_mc(&k, &EscapeMcOptions { walkers, seed: 2024, kill_factor: 64 }).expect("simulation");
    println!(
        "monte carlo   cap = {:.6} +- {:.6}  (correction {:.5}, p_ret {:.5}, {:.1}s)",
        mc.capacity,
        mc.std_error,
        mc.kill_correction,
        mc.return_after_kill,
        t.elapsed().as_secs_f64()
    );
    let rel = (mc.capacity - boxes.capacity).abs() / boxes.capacity;
    println!("relative gap = {:.4}%  green(0,0) = {:.6}", 100.0 * rel, 1.0 / boxes.capacity);
    println!("pinned CAP_ORIGIN_Z3 = {CAP_ORIGIN_Z3}  (extrapolated value rounded to 6 places)");
}
