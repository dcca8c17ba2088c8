//! Maximum-likelihood estimation of the global rank pmf by EM over a
//! mixture of binomials.
//!
//! Each observation `(r_u, n_u)` has likelihood
//! `P(r_u | Π) = Σ_k π_k · Bin(r_u−1; n_u−1, θ_k)`; the E-step computes
//! rank posteriors per user and the M-step averages them. Sample sizes
//! may differ across users, which is what makes this route usable for
//! adaptive sampling; equal sizes are the special case.
//!
//! Observations are grouped by distinct `(r, n)` pair first, so one
//! iteration costs `O(distinct · N)` rather than `O(M · N)`, and results
//! do not depend on input order.

use std::collections::BTreeMap;

use crate::binomial::likelihood_kernel;
use crate::error::{Error, Result};
use crate::metrics::plugin_metric_from_pmf;
use crate::types::{MetricSpec, RankPmf, SampleRecord};

/// Starting point for the iteration.
#[derive(Debug, Clone)]
pub enum EmInit {
    Uniform,
    Custom(RankPmf),
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the L∞ change of the pmf falls below this.
    pub tol: f64,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            init: EmInit::Uniform,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmResult {
    /// The fitted rank distribution.
    pub pmf: RankPmf,
    /// Observed-data log-likelihood of every iterate, starting with the
    /// initial one; length `iterations + 1` and non-decreasing.
    pub log_likelihoods: Vec<f64>,
    /// Number of E/M updates performed.
    pub iterations: usize,
    /// Whether the tolerance was reached before `max_iters`.
    pub converged: bool,
}

/// Collapse records into distinct `(sampled_rank, sample_size)` pairs with
/// multiplicities, in a deterministic order.
pub fn group_observations(samples: &[SampleRecord]) -> Vec<((usize, usize), usize)> {
    let mut groups: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for s in samples {
        *groups.entry((s.sampled_rank, s.sample_size)).or_insert(0) += 1;
    }
    groups.into_iter().collect()
}

/// One observation group's likelihood kernel, restricted to its nonzero
/// support. Entries outside `[lo, hi)` are exactly zero, so skipping them
/// leaves every sum bit-identical.
struct GroupKernel {
    weight: f64,
    lo: usize,
    hi: usize,
    values: Vec<f64>,
}

fn build_kernels(
    groups: &[((usize, usize), usize)],
    catalog_size: usize,
) -> Result<Vec<GroupKernel>> {
    groups
        .iter()
        .map(|&((r, n), count)| {
            let full = likelihood_kernel(r, n, catalog_size)?;
            let lo = full.iter().position(|&v| v > 0.0);
            let hi = full.iter().rposition(|&v| v > 0.0);
            let (lo, hi) = match (lo, hi) {
                (Some(lo), Some(hi)) => (lo, hi + 1),
                _ => {
                    return Err(Error::EmptyLikelihood {
                        sampled_rank: r,
                        sample_size: n,
                    })
                }
            };
            Ok(GroupKernel {
                weight: count as f64,
                lo,
                hi,
                values: full[lo..hi].to_vec(),
            })
        })
        .collect()
}

/// Fit the rank pmf to raw sample records.
pub fn em_fit(samples: &[SampleRecord], catalog_size: usize, cfg: &EmConfig) -> Result<EmResult> {
    em_fit_grouped(&group_observations(samples), catalog_size, cfg)
}

/// Fit the rank pmf to pre-grouped observations; identical to [`em_fit`]
/// on the expanded multiset.
pub fn em_fit_grouped(
    groups: &[((usize, usize), usize)],
    catalog_size: usize,
    cfg: &EmConfig,
) -> Result<EmResult> {
    if cfg.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::invalid("tol must be positive"));
    }
    if groups.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    let kernels = build_kernels(groups, catalog_size)?;
    let total_weight: f64 = kernels.iter().map(|k| k.weight).sum();

    let mut pmf = match &cfg.init {
        EmInit::Uniform => vec![1.0 / catalog_size as f64; catalog_size],
        EmInit::Custom(init) => {
            if init.catalog_size() != catalog_size {
                return Err(Error::LengthMismatch {
                    expected: catalog_size,
                    found: init.catalog_size(),
                });
            }
            init.probs().to_vec()
        }
    };

    let mut log_likelihoods = Vec::with_capacity(cfg.max_iters + 1);
    let mut accum = vec![0.0; catalog_size];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        accum.iter_mut().for_each(|a| *a = 0.0);
        let ll = e_step(&kernels, &pmf, &mut accum)?;
        log_likelihoods.push(ll);

        // M-step: mean posterior, renormalized so the iterate is an exact pmf.
        let sum: f64 = accum.iter().sum();
        debug_assert!((sum - total_weight).abs() <= 1e-6 * total_weight);
        let mut delta = 0.0_f64;
        for (p, &a) in pmf.iter_mut().zip(&accum) {
            let next = a / sum;
            delta = delta.max((next - *p).abs());
            *p = next;
        }
        iterations += 1;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    log_likelihoods.push(log_likelihood(&kernels, &pmf)?);

    Ok(EmResult {
        pmf: RankPmf::new(pmf)?,
        log_likelihoods,
        iterations,
        converged,
    })
}

/// One E-step: returns the log-likelihood of `pmf` and adds each group's
/// weighted posterior into `accum`.
fn e_step(kernels: &[GroupKernel], pmf: &[f64], accum: &mut [f64]) -> Result<f64> {
    let mut ll = 0.0;
    for k in kernels {
        let window = &pmf[k.lo..k.hi];
        let mix: f64 = window.iter().zip(&k.values).map(|(&p, &v)| p * v).sum();
        if mix.is_nan() || mix <= 0.0 {
            return Err(Error::EmptyLikelihood {
                sampled_rank: k.lo + 1, // best-effort context; support starts here
                sample_size: k.values.len(),
            });
        }
        ll += k.weight * mix.ln();
        let scale = k.weight / mix;
        for ((a, &p), &v) in accum[k.lo..k.hi].iter_mut().zip(window).zip(&k.values) {
            *a += scale * p * v;
        }
    }
    Ok(ll)
}

fn log_likelihood(kernels: &[GroupKernel], pmf: &[f64]) -> Result<f64> {
    let mut ll = 0.0;
    for k in kernels {
        let mix: f64 = pmf[k.lo..k.hi]
            .iter()
            .zip(&k.values)
            .map(|(&p, &v)| p * v)
            .sum();
        if mix.is_nan() || mix <= 0.0 {
            return Err(Error::EmptyLikelihood {
                sampled_rank: k.lo + 1,
                sample_size: k.values.len(),
            });
        }
        ll += k.weight * mix.ln();
    }
    Ok(ll)
}

/// MLE plug-in estimate from samples with possibly heterogeneous sizes:
/// fit the rank pmf by EM, then substitute it into the metric definition.
pub fn adaptive_mle_estimate(
    samples: &[SampleRecord],
    catalog_size: usize,
    spec: MetricSpec,
    cfg: &EmConfig,
) -> Result<f64> {
    let fit = em_fit(samples, catalog_size, cfg)?;
    Ok(plugin_metric_from_pmf(&fit.pmf, spec))
}
