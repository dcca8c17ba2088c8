//! Closed-form adjusted-metric estimators.
//!
//! Both estimators learn a per-sampled-rank score vector `x` from the
//! conditional model `A`, a prior `P(R)` and a truncated target `b`:
//!
//! * `solve_mn` minimizes the Jensen upper bound on the estimator's mean
//!   squared error, `L = ‖√D(Ax − b)‖² + (1/M)(‖√Λ₁x‖² − ‖Ax‖²)`, whose
//!   variance term shrinks with the user count `M`:
//!   `x = (AᵀDA − AᵀA/M + Λ₁/M)⁻¹ AᵀD b`.
//! * `solve_bv` is the earlier bias–variance tradeoff with hand-tuned
//!   weight `γ`: `x = ((1−γ)AᵀDA + γ·diag(c))⁻¹ AᵀD b` with
//!   `c_r = Σ_R P(R)P(r|R)`; it does not depend on `M`.
//!
//! Normal equations are accumulated by streaming rows of `A`, factored as
//! a symmetric positive-definite system, with a single ridge retry on
//! factorization failure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::binomial::ConditionalMatrix;
use crate::error::{Error, Result};
use crate::metrics::{apply_adjusted_metric, empirical_sampled_pmf, metric_value};
use crate::types::{AdjustedMetric, MetricSpec, RankPmf, SampleRecord};

/// One adjusted-metric fitting problem: prior, conditional model, target
/// metric vector `b` (length `N`, truncated at the cutoff) and the number
/// of test users behind the empirical distribution.
#[derive(Debug, Clone)]
pub struct LsProblem<'a> {
    prior: &'a RankPmf,
    cond: &'a ConditionalMatrix,
    target: Vec<f64>,
    user_count: usize,
}

impl<'a> LsProblem<'a> {
    pub fn new(
        prior: &'a RankPmf,
        cond: &'a ConditionalMatrix,
        target: Vec<f64>,
        user_count: usize,
    ) -> Result<Self> {
        if prior.catalog_size() != cond.catalog_size() {
            return Err(Error::LengthMismatch {
                expected: cond.catalog_size(),
                found: prior.catalog_size(),
            });
        }
        if target.len() != cond.catalog_size() {
            return Err(Error::LengthMismatch {
                expected: cond.catalog_size(),
                found: target.len(),
            });
        }
        if user_count == 0 {
            return Err(Error::invalid("user count must be at least 1"));
        }
        Ok(Self {
            prior,
            cond,
            target,
            user_count,
        })
    }

    /// Problem for a truncated metric target: `b_R = 1{R≤K}·M(R)`.
    pub fn for_metric(
        prior: &'a RankPmf,
        cond: &'a ConditionalMatrix,
        spec: MetricSpec,
        user_count: usize,
    ) -> Result<Self> {
        let target = (1..=cond.catalog_size())
            .map(|rank| metric_value(spec, rank))
            .collect();
        Self::new(prior, cond, target, user_count)
    }

    pub fn prior(&self) -> &RankPmf {
        self.prior
    }

    pub fn cond(&self) -> &ConditionalMatrix {
        self.cond
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn sample_size(&self) -> usize {
        self.cond.sample_size()
    }
}

/// Which closed-form estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LsMethod {
    /// The MSE-upper-bound estimator with `1/M` variance weighting.
    Mn,
    /// The bias–variance tradeoff estimator with weight `gamma`.
    Bv { gamma: f64 },
}

/// Shared quadratic pieces of both estimators, accumulated in one pass
/// over the rows of `A`.
struct NormalPieces {
    /// `AᵀDA` (equals `A′ᵀA′` of the bias–variance formulation).
    atda: DMatrix<f64>,
    /// `AᵀA`.
    ata: DMatrix<f64>,
    /// Column sums of `A` (diagonal of `Λ₁`).
    lambda1: Vec<f64>,
    /// Column sums of `DA`: `c_r = Σ_R P(R)P(r|R)`.
    prior_col: Vec<f64>,
}

fn accumulate_pieces(prior: &RankPmf, cond: &ConditionalMatrix) -> NormalPieces {
    let n = cond.sample_size();
    let mut atda = DMatrix::zeros(n, n);
    let mut ata = DMatrix::zeros(n, n);
    let mut lambda1 = vec![0.0; n];
    let mut prior_col = vec![0.0; n];
    for (row, &p) in cond.rows().zip(prior.probs()) {
        for i in 0..n {
            let ai = row[i];
            if ai == 0.0 {
                continue;
            }
            lambda1[i] += ai;
            prior_col[i] += p * ai;
            let wai = p * ai;
            for j in i..n {
                atda[(i, j)] += wai * row[j];
                ata[(i, j)] += ai * row[j];
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            atda[(j, i)] = atda[(i, j)];
            ata[(j, i)] = ata[(i, j)];
        }
    }
    NormalPieces {
        atda,
        ata,
        lambda1,
        prior_col,
    }
}

/// Right-hand side `c = AᵀD b`; skips ranks where `b` vanishes, so a
/// K-truncated target costs `O(K·n)`.
pub fn weighted_rhs(prior: &RankPmf, cond: &ConditionalMatrix, target: &[f64]) -> Vec<f64> {
    let n = cond.sample_size();
    let mut rhs = vec![0.0; n];
    for ((row, &p), &b) in cond.rows().zip(prior.probs()).zip(target) {
        if b == 0.0 || p == 0.0 {
            continue;
        }
        let w = p * b;
        for (acc, &a) in rhs.iter_mut().zip(row) {
            *acc += w * a;
        }
    }
    rhs
}

/// A factored system matrix ready to solve many targets.
///
/// The factorization is immutable; callers may share it across threads
/// and solve one right-hand side per `(metric, K)` pair.
pub struct AdjustedSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ridge: Option<f64>,
}

impl AdjustedSolver {
    /// Factor the MN system `AᵀDA + (Λ₁ − AᵀA)/M`.
    pub fn factor_mn(
        prior: &RankPmf,
        cond: &ConditionalMatrix,
        user_count: usize,
    ) -> Result<Self> {
        if user_count == 0 {
            return Err(Error::invalid("user count must be at least 1"));
        }
        if prior.catalog_size() != cond.catalog_size() {
            return Err(Error::LengthMismatch {
                expected: cond.catalog_size(),
                found: prior.catalog_size(),
            });
        }
        let pieces = accumulate_pieces(prior, cond);
        let n = cond.sample_size();
        let inv_m = 1.0 / user_count as f64;
        let mut system = pieces.atda;
        system -= pieces.ata * inv_m;
        for i in 0..n {
            system[(i, i)] += inv_m * pieces.lambda1[i];
        }
        Self::factor(system)
    }

    /// Factor the BV system `(1−γ)AᵀDA + γ·diag(c)`.
    pub fn factor_bv(prior: &RankPmf, cond: &ConditionalMatrix, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if prior.catalog_size() != cond.catalog_size() {
            return Err(Error::LengthMismatch {
                expected: cond.catalog_size(),
                found: prior.catalog_size(),
            });
        }
        let pieces = accumulate_pieces(prior, cond);
        let n = cond.sample_size();
        let mut system = pieces.atda;
        system *= 1.0 - gamma;
        for i in 0..n {
            system[(i, i)] += gamma * pieces.prior_col[i];
        }
        Self::factor(system)
    }

    fn factor(system: DMatrix<f64>) -> Result<Self> {
        let n = system.nrows();
        let trace: f64 = (0..n).map(|i| system[(i, i)]).sum();
        match nalgebra::Cholesky::new(system.clone()) {
            Some(chol) => Ok(Self { chol, ridge: None }),
            None => {
                let eps = 1e-10 * (trace / n as f64);
                let mut ridged = system;
                for i in 0..n {
                    ridged[(i, i)] += eps;
                }
                let diag_min = (0..n).map(|i| ridged[(i, i)]).fold(f64::INFINITY, f64::min);
                let diag_max = (0..n).map(|i| ridged[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
                match nalgebra::Cholesky::new(ridged) {
                    Some(chol) => Ok(Self {
                        chol,
                        ridge: Some(eps),
                    }),
                    None => Err(Error::SingularSystem {
                        diagnostics: format!(
                            "{n}×{n} normal equations failed Cholesky even with ridge {eps:.3e}; \
                             trace {trace:.6e}, diagonal range [{diag_min:.3e}, {diag_max:.3e}]"
                        ),
                    }),
                }
            }
        }
    }

    /// Ridge added during factorization, if any.
    pub fn ridge(&self) -> Option<f64> {
        self.ridge
    }

    /// Solve for one right-hand side `c`, returning `x = S⁻¹c`.
    pub fn solve_rhs(&self, rhs: &[f64]) -> AdjustedMetric {
        let solution = self.chol.solve(&DVector::from_column_slice(rhs));
        AdjustedMetric::new(solution.as_slice().to_vec())
            .expect("SPD solve produced non-finite values")
    }
}

/// Fit the MSE-upper-bound estimator.
pub fn solve_mn(problem: &LsProblem) -> Result<AdjustedMetric> {
    let solver = AdjustedSolver::factor_mn(problem.prior, problem.cond, problem.user_count)?;
    Ok(solver.solve_rhs(&weighted_rhs(problem.prior, problem.cond, &problem.target)))
}

/// Fit the bias–variance tradeoff estimator.
pub fn solve_bv(problem: &LsProblem, gamma: f64) -> Result<AdjustedMetric> {
    let solver = AdjustedSolver::factor_bv(problem.prior, problem.cond, gamma)?;
    Ok(solver.solve_rhs(&weighted_rhs(problem.prior, problem.cond, &problem.target)))
}

/// The two components of the MN objective and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// Bias term `L1 = Σ_R P(R)(A_R·x − b_R)²`.
    pub bias: f64,
    /// Variance term `L2 = (1/M)(Σ_r Λ₁_r x_r² − Σ_R (A_R·x)²)`.
    pub variance: f64,
    pub total: f64,
}

/// Evaluate the MN objective at an arbitrary adjusted metric.
///
/// `L2 ≥ 0` up to rounding for any row-stochastic `A` (Jensen).
pub fn eval_objective(x: &AdjustedMetric, problem: &LsProblem) -> Result<Objective> {
    let n = problem.sample_size();
    if x.sample_size() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: x.sample_size(),
        });
    }
    let xv = x.values();
    let mut bias = 0.0;
    let mut sum_ax_sq = 0.0;
    let mut quad_lambda = 0.0;
    for ((row, &p), &b) in problem
        .cond
        .rows()
        .zip(problem.prior.probs())
        .zip(&problem.target)
    {
        let mut ax = 0.0;
        let mut ax2 = 0.0;
        for (&a, &xi) in row.iter().zip(xv) {
            ax += a * xi;
            ax2 += a * xi * xi;
        }
        bias += p * (ax - b) * (ax - b);
        sum_ax_sq += ax * ax;
        quad_lambda += ax2;
    }
    let variance = (quad_lambda - sum_ax_sq) / problem.user_count as f64;
    Ok(Objective {
        bias,
        variance,
        total: bias + variance,
    })
}

/// Evaluate the BV objective: bias plus `γ`-weighted variance,
/// `‖√D(Ax−b)‖² + γ(Σ_r c_r x_r² − ‖√D Ax‖²)`.
///
/// This is the quadratic whose stationary point is the BV closed form;
/// the variance term is the prior-weighted Jensen gap and is nonnegative.
pub fn eval_bv_objective(x: &AdjustedMetric, problem: &LsProblem, gamma: f64) -> Result<f64> {
    let n = problem.sample_size();
    if x.sample_size() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: x.sample_size(),
        });
    }
    let xv = x.values();
    let mut fit = 0.0;
    let mut variance = 0.0;
    for ((row, &p), &b) in problem
        .cond
        .rows()
        .zip(problem.prior.probs())
        .zip(&problem.target)
    {
        let mut ax = 0.0;
        let mut ax2 = 0.0;
        for (&a, &xi) in row.iter().zip(xv) {
            ax += a * xi;
            ax2 += a * xi * xi;
        }
        fit += p * (ax - b) * (ax - b);
        variance += p * (ax2 - ax * ax);
    }
    Ok(fit + gamma * variance)
}

/// Analytic gradient of the MN objective:
/// `∇L = 2(AᵀDA − AᵀA/M + Λ₁/M)x − 2AᵀDb`.
pub fn mn_gradient(x: &AdjustedMetric, problem: &LsProblem) -> Result<Vec<f64>> {
    let n = problem.sample_size();
    if x.sample_size() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: x.sample_size(),
        });
    }
    let xv = x.values();
    let inv_m = 1.0 / problem.user_count as f64;
    let mut grad = vec![0.0; n];
    let mut lambda1 = vec![0.0; n];
    for ((row, &p), &b) in problem
        .cond
        .rows()
        .zip(problem.prior.probs())
        .zip(&problem.target)
    {
        let ax: f64 = row.iter().zip(xv).map(|(&a, &xi)| a * xi).sum();
        let w = 2.0 * (p * (ax - b) - inv_m * ax);
        for ((g, &a), l) in grad.iter_mut().zip(row).zip(lambda1.iter_mut()) {
            *g += w * a;
            *l += a;
        }
    }
    for ((g, &l), &xi) in grad.iter_mut().zip(&lambda1).zip(xv) {
        *g += 2.0 * inv_m * l * xi;
    }
    Ok(grad)
}

/// Analytic gradient of the BV objective:
/// `∇J = 2AᵀD(Ax−b) − 2γAᵀDAx + 2γ·c⊙x = 2((1−γ)AᵀDA + γdiag(c))x − 2AᵀDb`.
pub fn bv_gradient(x: &AdjustedMetric, problem: &LsProblem, gamma: f64) -> Result<Vec<f64>> {
    let n = problem.sample_size();
    if x.sample_size() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: x.sample_size(),
        });
    }
    let xv = x.values();
    let mut grad = vec![0.0; n];
    let mut prior_col = vec![0.0; n];
    for ((row, &p), &b) in problem
        .cond
        .rows()
        .zip(problem.prior.probs())
        .zip(&problem.target)
    {
        let ax: f64 = row.iter().zip(xv).map(|(&a, &xi)| a * xi).sum();
        let w = 2.0 * p * ((1.0 - gamma) * ax - b);
        for ((g, &a), c) in grad.iter_mut().zip(row).zip(prior_col.iter_mut()) {
            *g += w * a;
            *c += p * a;
        }
    }
    for ((g, &c), &xi) in grad.iter_mut().zip(&prior_col).zip(xv) {
        *g += 2.0 * gamma * c * xi;
    }
    Ok(grad)
}

/// The single sample size shared by all records, or the mixed-size error
/// directing callers to the EM route.
pub fn equal_sample_size(samples: &[SampleRecord]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("need at least one sample record"))?
        .sample_size;
    for s in samples {
        if s.sample_size != first {
            return Err(Error::MixedSampleSizes {
                expected: first,
                found: s.sample_size,
            });
        }
    }
    Ok(first)
}

/// End-to-end estimate from equal-size sample records: fit the adjusted
/// metric against `prior` and average it under the empirical sampled-rank
/// distribution.
pub fn estimate_with_adjusted(
    samples: &[SampleRecord],
    spec: MetricSpec,
    prior: &RankPmf,
    method: LsMethod,
) -> Result<f64> {
    let n = equal_sample_size(samples)?;
    let cond = ConditionalMatrix::binomial(n, prior.catalog_size())?;
    estimate_with_adjusted_cond(samples, spec, prior, &cond, method)
}

/// Same as [`estimate_with_adjusted`] with a caller-supplied conditional
/// matrix (reused across targets, or the identity in exact mode).
pub fn estimate_with_adjusted_cond(
    samples: &[SampleRecord],
    spec: MetricSpec,
    prior: &RankPmf,
    cond: &ConditionalMatrix,
    method: LsMethod,
) -> Result<f64> {
    let n = equal_sample_size(samples)?;
    if n != cond.sample_size() {
        return Err(Error::LengthMismatch {
            expected: cond.sample_size(),
            found: n,
        });
    }
    let problem = LsProblem::for_metric(prior, cond, spec, samples.len())?;
    let adjusted = match method {
        LsMethod::Mn => solve_mn(&problem)?,
        LsMethod::Bv { gamma } => solve_bv(&problem, gamma)?,
    };
    let p_tilde = empirical_sampled_pmf(samples, n)?;
    apply_adjusted_metric(&adjusted, &p_tilde)
}
