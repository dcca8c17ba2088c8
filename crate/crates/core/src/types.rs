//! Domain types shared across the crate.
//!
//! Ranks are 1-based everywhere: a global rank `R` lives in `1..=N` and a
//! sampled rank `r` lives in `1..=n`. Vectors indexed by rank store the
//! value for rank `i` at position `i - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on probability vectors.
pub const PMF_SUM_TOL: f64 = 1e-9;

/// Ground-truth global ranks for a population of test users, together with
/// the catalog size they were ranked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDataset {
    catalog_size: usize,
    ranks: Vec<usize>,
}

impl RankDataset {
    pub fn new(catalog_size: usize, ranks: Vec<usize>) -> Result<Self> {
        if catalog_size < 2 {
            return Err(Error::invalid(format!(
                "catalog size must be at least 2, got {catalog_size}"
            )));
        }
        if ranks.is_empty() {
            return Err(Error::invalid("a dataset needs at least one user"));
        }
        if let Some(&bad) = ranks.iter().find(|&&r| r < 1 || r > catalog_size) {
            return Err(Error::invalid(format!(
                "global rank {bad} outside [1, {catalog_size}]"
            )));
        }
        Ok(Self {
            catalog_size,
            ranks,
        })
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog_size
    }

    /// One global rank per user, in user order.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn user_count(&self) -> usize {
        self.ranks.len()
    }

    /// Empirical pmf of the global ranks: `probs[R-1]` is the fraction of
    /// users whose target sits at global rank `R`.
    pub fn empirical_pmf(&self) -> RankPmf {
        let mut probs = vec![0.0; self.catalog_size];
        let weight = 1.0 / self.ranks.len() as f64;
        for &r in &self.ranks {
            probs[r - 1] += weight;
        }
        RankPmf::new_unchecked(probs)
    }
}

/// One user's observed sampled rank together with the sample-set size that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub user_index: usize,
    pub sampled_rank: usize,
    pub sample_size: usize,
}

impl SampleRecord {
    pub fn new(user_index: usize, sampled_rank: usize, sample_size: usize) -> Result<Self> {
        if sample_size < 2 {
            return Err(Error::invalid(format!(
                "sample size must be at least 2, got {sample_size}"
            )));
        }
        if sampled_rank < 1 || sampled_rank > sample_size {
            return Err(Error::invalid(format!(
                "sampled rank {sampled_rank} outside [1, {sample_size}]"
            )));
        }
        Ok(Self {
            user_index,
            sampled_rank,
            sample_size,
        })
    }
}

/// Probability vector over global ranks `1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPmf {
    probs: Vec<f64>,
}

impl RankPmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_pmf(&probs)?;
        Ok(Self { probs })
    }

    /// Skips validation; for internal construction of vectors that are
    /// normalized by construction.
    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(validate_pmf(&probs).is_ok());
        Self { probs }
    }

    pub fn uniform(catalog_size: usize) -> Self {
        Self {
            probs: vec![1.0 / catalog_size as f64; catalog_size],
        }
    }

    pub fn catalog_size(&self) -> usize {
        self.probs.len()
    }

    /// Probability of global rank `rank` (1-based).
    pub fn prob(&self, rank: usize) -> f64 {
        self.probs[rank - 1]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Probability vector over sampled ranks `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPmf {
    probs: Vec<f64>,
}

impl SampledPmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_pmf(&probs)?;
        Ok(Self { probs })
    }

    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(validate_pmf(&probs).is_ok());
        Self { probs }
    }

    pub fn sample_size(&self) -> usize {
        self.probs.len()
    }

    /// Probability of sampled rank `rank` (1-based).
    pub fn prob(&self, rank: usize) -> f64 {
        self.probs[rank - 1]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn validate_pmf(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if let Some(&bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::invalid(format!("negative or non-finite probability {bad}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PMF_SUM_TOL {
        return Err(Error::invalid(format!(
            "probabilities sum to {sum}, expected 1 within {PMF_SUM_TOL:e}"
        )));
    }
    Ok(())
}

/// Metric family for single-target top-K evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricFamily {
    Recall,
    Ndcg,
    Ap,
}

impl MetricFamily {
    pub const ALL: [MetricFamily; 3] = [MetricFamily::Recall, MetricFamily::Ndcg, MetricFamily::Ap];

    pub fn name(self) -> &'static str {
        match self {
            MetricFamily::Recall => "recall",
            MetricFamily::Ndcg => "ndcg",
            MetricFamily::Ap => "ap",
        }
    }
}

impl std::fmt::Display for MetricFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recall" | "hr" | "hitratio" => Ok(MetricFamily::Recall),
            "ndcg" => Ok(MetricFamily::Ndcg),
            "ap" => Ok(MetricFamily::Ap),
            other => Err(Error::invalid(format!(
                "unknown metric `{other}` (expected recall, ndcg, or ap)"
            ))),
        }
    }
}

/// A metric family truncated at cutoff `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricSpec {
    pub family: MetricFamily,
    pub cutoff: usize,
}

impl MetricSpec {
    pub fn new(family: MetricFamily, cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::invalid("metric cutoff K must be at least 1"));
        }
        Ok(Self { family, cutoff })
    }
}

impl std::fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.family, self.cutoff)
    }
}

/// A learned per-sampled-rank score vector; averaging it under the
/// empirical sampled-rank distribution estimates the global metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedMetric {
    values: Vec<f64>,
}

impl AdjustedMetric {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty adjusted metric"));
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite adjusted value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn sample_size(&self) -> usize {
        self.values.len()
    }

    /// Adjusted score for sampled rank `rank` (1-based).
    pub fn value(&self, rank: usize) -> f64 {
        self.values[rank - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
