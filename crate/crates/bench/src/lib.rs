//! Benchmark fixtures.

use mdpgeo::gen::{generate, GenSpec, Structure};
use mdpgeo::Mdp;

/// Sizes used by the solver benchmarks.
pub const SIZES: [usize; 3] = [10, 50, 200];

/// Dense random model with `n` states and 2 to 6 actions per state.
pub fn dense(n: usize, gamma: f64, seed: u64) -> Mdp {
    generate(&GenSpec::new(n, (2, 6), gamma, seed, Structure::Dense)).expect("valid spec")
}

/// Sparse random model with `k` successors per action.
pub fn sparse(n: usize, k: usize, gamma: f64, seed: u64) -> Mdp {
    generate(&GenSpec::new(n, (2, 6), gamma, seed, Structure::Sparse { k })).expect("valid spec")
}
