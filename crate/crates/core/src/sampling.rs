//! Seeded rank-space simulation of item sampling.
//!
//! Items never get identities: for a target at global rank `R`, a drawn
//! item outranks it with probability `(R−1)/(N−1)`, so only the count of
//! outranking draws matters. Draws are with replacement, matching the
//! binomial model in [`crate::binomial`].
//!
//! Every user gets an independent RNG substream derived from
//! `(seed, user_index)`, so parallel and serial runs produce identical
//! records in user order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RankDataset, SampleRecord};

/// Doubling schedule for adaptive sampling: start at `initial_size` and
/// double up to `terminal_size = initial_size · 2^t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    initial_size: usize,
    terminal_size: usize,
}

impl AdaptiveConfig {
    pub fn new(initial_size: usize, terminal_size: usize) -> Result<Self> {
        if initial_size < 2 {
            return Err(Error::invalid(format!(
                "initial size must be at least 2, got {initial_size}"
            )));
        }
        let mut size = initial_size;
        while size < terminal_size {
            size = size.checked_mul(2).ok_or_else(|| Error::invalid("terminal size overflows"))?;
        }
        if size != terminal_size {
            return Err(Error::invalid(format!(
                "terminal size {terminal_size} is not initial size {initial_size} times a power of two"
            )));
        }
        Ok(Self {
            initial_size,
            terminal_size,
        })
    }

    pub fn initial_size(&self) -> usize {
        self.initial_size
    }

    pub fn terminal_size(&self) -> usize {
        self.terminal_size
    }

    /// All sizes on the schedule: `n_0, 2n_0, …, n_max`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.initial_size];
        while *sizes.last().unwrap() < self.terminal_size {
            sizes.push(sizes.last().unwrap() * 2);
        }
        sizes
    }
}

fn user_rng(seed: u64, user_index: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(user_index as u64);
    rng
}

/// Count how many of `draws` uniform picks from the `N−1` non-target
/// items land above the target.
fn count_outranks(rng: &mut ChaCha12Rng, draws: usize, rank: usize, catalog_size: usize) -> usize {
    let above = rank - 1;
    let pool = catalog_size - 1;
    let mut count = 0;
    for _ in 0..draws {
        if rng.random_range(0..pool) < above {
            count += 1;
        }
    }
    count
}

/// Fixed-size sampling: each user's target plus `n−1` drawn items.
pub fn simulate_fixed(dataset: &RankDataset, n: usize, seed: u64) -> Result<Vec<SampleRecord>> {
    if n < 2 {
        return Err(Error::invalid(format!("sample size must be at least 2, got {n}")));
    }
    let cat = dataset.catalog_size();
    Ok(dataset
        .ranks()
        .par_iter()
        .enumerate()
        .map(|(user, &rank)| {
            let mut rng = user_rng(seed, user);
            let count = count_outranks(&mut rng, n - 1, rank, cat);
            SampleRecord {
                user_index: user,
                sampled_rank: count + 1,
                sample_size: n,
            }
        })
        .collect())
}

/// Adaptive sampling: whenever the target still ranks first, double the
/// sample-set size (drawing the extra items into the running count) until
/// it does not or the schedule's ceiling is reached.
pub fn simulate_adaptive(
    dataset: &RankDataset,
    cfg: &AdaptiveConfig,
    seed: u64,
) -> Vec<SampleRecord> {
    let cat = dataset.catalog_size();
    dataset
        .ranks()
        .par_iter()
        .enumerate()
        .map(|(user, &rank)| {
            let mut rng = user_rng(seed, user);
            let mut size = cfg.initial_size;
            let mut count = count_outranks(&mut rng, size - 1, rank, cat);
            while count == 0 && size < cfg.terminal_size {
                count = count_outranks(&mut rng, size, rank, cat);
                size *= 2;
            }
            SampleRecord {
                user_index: user,
                sampled_rank: count + 1,
                sample_size: size,
            }
        })
        .collect()
}

/// Post-analysis of an adaptive run: how many users stopped at each size
/// and the average items drawn per user who escaped rank 1 at that level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    /// The doubling schedule `n_0 … n_max`.
    pub sizes: Vec<usize>,
    /// Users whose final sample size was `sizes[j]`.
    pub counts: Vec<usize>,
    /// Sampling cost per escaped user at each level; `None` at the
    /// terminal level (users stop there regardless) and at levels no user
    /// escaped at.
    pub costs: Vec<Option<f64>>,
}

pub fn efficiency_analysis(
    records: &[SampleRecord],
    cfg: &AdaptiveConfig,
    user_count: usize,
) -> Result<EfficiencyReport> {
    if records.len() != user_count {
        return Err(Error::invalid(format!(
            "got {} records for {user_count} users",
            records.len()
        )));
    }
    let sizes = cfg.sizes();
    let mut counts = vec![0usize; sizes.len()];
    for rec in records {
        let level = sizes
            .iter()
            .position(|&s| s == rec.sample_size)
            .ok_or_else(|| Error::ScheduleMismatch {
                observed: rec.sample_size,
                schedule: sizes.clone(),
            })?;
        counts[level] += 1;
    }
    let terminal = sizes.len() - 1;
    let mut remaining = user_count;
    let mut costs = Vec::with_capacity(sizes.len());
    for j in 0..sizes.len() {
        let cost = if j == terminal || counts[j] == 0 {
            None
        } else {
            let drawn = if j == 0 {
                user_count * sizes[0]
            } else {
                remaining * (sizes[j] - sizes[j - 1])
            };
            Some(drawn as f64 / counts[j] as f64)
        };
        costs.push(cost);
        remaining -= counts[j];
    }
    Ok(EfficiencyReport {
        sizes,
        counts,
        costs,
    })
}
