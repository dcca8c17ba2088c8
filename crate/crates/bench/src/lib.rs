//! Shared fixtures for the benchmarks.

use rankeval_core::experiment::synth_ranks;
use rankeval_core::RankDataset;

/// Desk-scale ground truth used across benches: Zipf(1.2) ranks.
pub fn benchmark_dataset(catalog_size: usize, users: usize) -> RankDataset {
    synth_ranks(catalog_size, users, 1.2, 99).expect("valid parameters")
}
