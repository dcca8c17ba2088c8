//! Exact global metrics, naive sampled metrics, and plug-in estimation.
//!
//! The metric families are the single-target forms: one hidden relevant
//! item per user, so Recall@K is an indicator, NDCG@K is the reciprocal
//! log-discount and AP@K the reciprocal rank, all zero beyond the cutoff.

use crate::error::{Error, Result};
use crate::types::{
    AdjustedMetric, MetricFamily, MetricSpec, RankDataset, RankPmf, SampleRecord, SampledPmf,
};

/// Untruncated per-rank score of a metric family.
///
/// `metric_value` is this weight gated by the cutoff; keeping the weight
/// separate lets curve computations over `K = 1..k_max` run as a single
/// cumulative sum.
pub fn metric_weight(family: MetricFamily, rank: usize) -> f64 {
    debug_assert!(rank >= 1, "ranks are 1-based");
    match family {
        MetricFamily::Recall => 1.0,
        MetricFamily::Ndcg => 1.0 / ((rank + 1) as f64).log2(),
        MetricFamily::Ap => 1.0 / rank as f64,
    }
}

/// Per-rank score of the truncated metric: zero whenever `rank > K`.
pub fn metric_value(spec: MetricSpec, rank: usize) -> f64 {
    if rank > spec.cutoff {
        0.0
    } else {
        metric_weight(spec.family, rank)
    }
}

/// Exact global top-K metric over all users: the mean truncated score of
/// the true global ranks.
pub fn global_metric(dataset: &RankDataset, spec: MetricSpec) -> f64 {
    let sum: f64 = dataset
        .ranks()
        .iter()
        .map(|&r| metric_value(spec, r))
        .sum();
    sum / dataset.user_count() as f64
}

/// The sampled metric computed directly on sampled ranks, known to be
/// inconsistent with [`global_metric`].
pub fn naive_sampled_metric(samples: &[SampleRecord], spec: MetricSpec) -> f64 {
    assert!(!samples.is_empty(), "need at least one sample record");
    let sum: f64 = samples
        .iter()
        .map(|s| metric_value(spec, s.sampled_rank))
        .sum();
    sum / samples.len() as f64
}

/// Empirical distribution of sampled ranks for an equal-size sample set.
///
/// Fails on heterogeneous sample sizes: the least-squares estimators that
/// consume this distribution are defined for a single `n`.
pub fn empirical_sampled_pmf(samples: &[SampleRecord], n: usize) -> Result<SampledPmf> {
    if samples.is_empty() {
        return Err(Error::invalid("need at least one sample record"));
    }
    let mut probs = vec![0.0; n];
    let weight = 1.0 / samples.len() as f64;
    for s in samples {
        if s.sample_size != n {
            return Err(Error::MixedSampleSizes {
                expected: n,
                found: s.sample_size,
            });
        }
        probs[s.sampled_rank - 1] += weight;
    }
    Ok(SampledPmf::new_unchecked(probs))
}

/// Plug-in estimate: substitute an estimated rank pmf into the metric
/// definition, `T̂ = Σ_{R≤K} P̂(R)·M(R)`.
pub fn plugin_metric_from_pmf(pmf: &RankPmf, spec: MetricSpec) -> f64 {
    let upper = spec.cutoff.min(pmf.catalog_size());
    (1..=upper)
        .map(|rank| pmf.prob(rank) * metric_weight(spec.family, rank))
        .sum()
}

/// Average an adjusted metric function under the empirical sampled-rank
/// distribution: `T̂ = Σ_r P̃(r)·M̂(r)`.
pub fn apply_adjusted_metric(adj: &AdjustedMetric, p_tilde: &SampledPmf) -> Result<f64> {
    if adj.sample_size() != p_tilde.sample_size() {
        return Err(Error::LengthMismatch {
            expected: adj.sample_size(),
            found: p_tilde.sample_size(),
        });
    }
    Ok(adj
        .values()
        .iter()
        .zip(p_tilde.probs())
        .map(|(v, p)| v * p)
        .sum())
}
