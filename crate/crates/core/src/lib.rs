//! Estimation of global top-K recommendation metrics from sampled ranks.
//!
//! Evaluating a recommender on the full catalog ranks every user's hidden
//! target item among all `N` items; item sampling ranks it among a small
//! sampled set instead. The sampled metric is a biased estimate of the
//! global one, so this crate provides the machinery to correct it:
//!
//! * [`metrics`] — exact global metrics, the naive sampled metric, and
//!   plug-in estimation from a rank distribution.
//! * [`binomial`] — the conditional model `P(r | R; n)` linking sampled
//!   ranks to global ranks.
//! * [`sampling`] — seeded rank-space simulation of fixed-size and
//!   adaptive item sampling, plus sampling-efficiency analysis.
//! * [`lstsq`] — closed-form adjusted-metric estimators (the
//!   MSE-upper-bound solver and the bias–variance baseline).
//! * [`em`] — maximum-likelihood rank-distribution fitting by EM over a
//!   mixture of binomials, with per-user sample sizes.
//! * [`oracle`] — independent brute-force and Monte Carlo validators.
//! * [`experiment`] — the benchmarking harness: synthetic ground truth,
//!   repeats, relative-error reports, winner prediction.
//! * [`io`] — the CSV/JSON interchange formats.

pub mod binomial;
pub mod em;
pub mod error;
pub mod experiment;
pub mod io;
pub mod lstsq;
pub mod metrics;
pub mod oracle;
pub mod sampling;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    AdjustedMetric, MetricFamily, MetricSpec, RankDataset, RankPmf, SampleRecord, SampledPmf,
};
