//! Fixture datasets shared by the benchmarks.

use maptree_core::synthetic::{self, SynthConfig};
use maptree_core::BinaryDataset;

/// A noisy synthetic dataset drawn from a random tree.
pub fn synthetic_dataset(
    n_features: usize,
    n_internal_nodes: usize,
    n_samples: usize,
    seed: u64,
) -> BinaryDataset {
    let cfg = SynthConfig {
        n_features,
        n_internal_nodes,
        n_samples,
        noise_eps: 0.1,
        seed,
    };
    synthetic::generate(&cfg).expect("valid synthetic config").1
}

/// The dataset the search benchmarks run on.
pub fn search_fixture() -> BinaryDataset {
    synthetic_dataset(20, 10, 1000, 77)
}

/// A dataset with enough samples that bitset work dominates.
pub fn wide_fixture() -> BinaryDataset {
    synthetic_dataset(40, 7, 20_000, 5)
}
