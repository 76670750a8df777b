//! Shared inputs for the criterion benchmarks.

use rfkernel::simgen::{simulate, SimOptions};
use rfkernel::{GeneratedData, Setup, TargetKind};

/// A seeded simulated data set of the given kind.
pub fn dataset(setup: Setup, kind: TargetKind, n: usize, p: usize) -> GeneratedData {
    simulate(setup, kind, n, p, 1, &SimOptions::default()).expect("valid benchmark scenario")
}
