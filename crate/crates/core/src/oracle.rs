//! Brute-force and Monte Carlo validators.
//!
//! Everything here is deliberately implemented without sharing numeric
//! kernels with the modules it checks: its own elimination solver, its
//! own direct-product binomial, its own enumeration of draw sequences.
//! The validators back the test suite and the CLI `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::types::{RankPmf, SampleRecord};

/// Solve a small dense system by Gaussian elimination with partial
/// pivoting. Size capped at 8: this is a correctness anchor, not a solver.
#[allow(clippy::needless_range_loop)]
pub fn dense_solve_oracle(matrix: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.len();
    if n == 0 || n > 8 {
        return Err(Error::invalid(format!("oracle handles sizes 1..=8, got {n}")));
    }
    if matrix.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("matrix is not square"));
    }
    if rhs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let scale = matrix
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let mut aug: Vec<Vec<f64>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, &b)| {
            let mut r = row.clone();
            r.push(b);
            r
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
            .unwrap();
        if aug[pivot_row][col].abs() <= 1e-14 * scale {
            return Err(Error::SingularSystem {
                diagnostics: format!("oracle pivot {:.3e} at column {col}", aug[pivot_row][col]),
            });
        }
        aug.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = aug[row][col] / aug[col][col];
            for k in col..=n {
                let sub = factor * aug[col][k];
                aug[row][k] -= sub;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = aug[row][n];
        for k in (row + 1)..n {
            acc -= aug[row][k] * x[k];
        }
        x[row] = acc / aug[row][row];
    }
    Ok(x)
}

/// Direct-product binomial pmf, independent of the log-domain kernel.
fn binom_pmf_direct(k: usize, m: usize, theta: f64) -> f64 {
    let mut coeff = 1.0;
    for i in 0..k {
        coeff *= (m - i) as f64 / (i + 1) as f64;
    }
    coeff * theta.powi(k as i32) * (1.0 - theta).powi((m - k) as i32)
}

/// Exhaustive maximum-likelihood search over a simplex grid.
///
/// Scores the observed-data log-likelihood at every pmf whose entries are
/// multiples of `step` and returns the first maximizer in lexicographic
/// enumeration order. Tractable only for `N ≤ 4`.
pub fn simplex_grid_mle(
    samples: &[SampleRecord],
    catalog_size: usize,
    step: f64,
) -> Result<RankPmf> {
    if !(2..=4).contains(&catalog_size) {
        return Err(Error::invalid(format!(
            "grid oracle handles N in 2..=4, got {catalog_size}"
        )));
    }
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::invalid(format!("step must lie in (0, 0.01], got {step}")));
    }
    if samples.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    let ticks = (1.0 / step).round() as usize;

    // group and build per-group kernels with the direct-product pmf
    let mut grouped: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    for s in samples {
        *grouped.entry((s.sampled_rank, s.sample_size)).or_insert(0.0) += 1.0;
    }
    let kernels: Vec<(f64, Vec<f64>)> = grouped
        .into_iter()
        .map(|((r, n), w)| {
            let kernel: Vec<f64> = (1..=catalog_size)
                .map(|rank| {
                    let theta = (rank - 1) as f64 / (catalog_size - 1) as f64;
                    binom_pmf_direct(r - 1, n - 1, theta)
                })
                .collect();
            (w, kernel)
        })
        .collect();

    let score = |pi: &[f64]| -> f64 {
        let mut ll = 0.0;
        for (w, kernel) in &kernels {
            let mix: f64 = pi.iter().zip(kernel).map(|(&p, &k)| p * k).sum();
            if mix <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += w * mix.ln();
        }
        ll
    };

    let mut best_ll = f64::NEG_INFINITY;
    let mut best: Vec<f64> = Vec::new();
    let mut candidate = vec![0.0; catalog_size];
    let mut counts = vec![0usize; catalog_size];
    enumerate_compositions(ticks, catalog_size, &mut counts, 0, &mut |counts| {
        for (c, &t) in candidate.iter_mut().zip(counts) {
            *c = t as f64 / ticks as f64;
        }
        let ll = score(&candidate);
        if ll > best_ll {
            best_ll = ll;
            best = candidate.clone();
        }
    });
    if best.is_empty() {
        return Err(Error::invalid("likelihood was zero on the whole grid"));
    }
    RankPmf::new(best)
}

fn enumerate_compositions(
    remaining: usize,
    cells: usize,
    counts: &mut Vec<usize>,
    index: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if index == cells - 1 {
        counts[index] = remaining;
        visit(counts);
        return;
    }
    for take in 0..=remaining {
        counts[index] = take;
        enumerate_compositions(remaining - take, cells, counts, index + 1, visit);
    }
}

/// Result of the weighted-multinomial variance identity check.
#[derive(Debug, Clone, Copy)]
pub struct VarianceCheck {
    /// `M(Σ w_i²θ_i − (Σ w_iθ_i)²)`.
    pub analytic: f64,
    /// Sample variance of `Σ w_i X_i` over the Monte Carlo runs.
    pub empirical: f64,
    /// Standard error of the sample-variance estimator.
    pub std_error: f64,
}

/// Monte Carlo check of the variance of a weighted multinomial sum.
pub fn weighted_multinomial_variance_check(
    weights: &[f64],
    cell_probs: &[f64],
    trials: usize,
    mc_runs: usize,
    seed: u64,
) -> Result<VarianceCheck> {
    if weights.len() != cell_probs.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            found: cell_probs.len(),
        });
    }
    if cell_probs.iter().any(|&p| p < 0.0)
        || (cell_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid("cell probabilities must form a pmf"));
    }
    if trials == 0 || mc_runs < 10_000 {
        return Err(Error::invalid("need trials ≥ 1 and at least 10^4 Monte Carlo runs"));
    }

    let mean: f64 = weights.iter().zip(cell_probs).map(|(&w, &t)| w * t).sum();
    let square: f64 = weights
        .iter()
        .zip(cell_probs)
        .map(|(&w, &t)| w * w * t)
        .sum();
    let analytic = trials as f64 * (square - mean * mean);

    let mut cumulative = Vec::with_capacity(cell_probs.len());
    let mut acc = 0.0;
    for &p in cell_probs {
        acc += p;
        cumulative.push(acc);
    }
    *cumulative.last_mut().unwrap() = 1.0;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sums = Vec::with_capacity(mc_runs);
    for _ in 0..mc_runs {
        let mut total = 0.0;
        for _ in 0..trials {
            let u: f64 = rng.random();
            let cell = cumulative.partition_point(|&c| c < u);
            total += weights[cell.min(weights.len() - 1)];
        }
        sums.push(total);
    }
    let m = mc_runs as f64;
    let mean_s = sums.iter().sum::<f64>() / m;
    let var = sums.iter().map(|s| (s - mean_s) * (s - mean_s)).sum::<f64>() / (m - 1.0);
    let mu4 = sums
        .iter()
        .map(|s| {
            let d = s - mean_s;
            d * d * d * d
        })
        .sum::<f64>()
        / m;
    // Var(s²) ≈ (μ₄ − σ⁴(m−3)/(m−1)) / m
    let var_of_var = ((mu4 - var * var * (m - 3.0) / (m - 1.0)) / m).max(0.0);
    Ok(VarianceCheck {
        analytic,
        empirical: var,
        std_error: var_of_var.sqrt(),
    })
}

/// Exact distribution of the sampled rank on a tiny instance, by full
/// enumeration of all `(N−1)^(n−1)` with-replacement draw sequences.
pub fn exhaustive_sampling_law(catalog_size: usize, n: usize, rank: usize) -> Result<Vec<f64>> {
    if !(2..=6).contains(&catalog_size) {
        return Err(Error::invalid(format!(
            "enumeration handles N in 2..=6, got {catalog_size}"
        )));
    }
    if !(2..=4).contains(&n) {
        return Err(Error::invalid(format!("enumeration handles n in 2..=4, got {n}")));
    }
    if rank < 1 || rank > catalog_size {
        return Err(Error::invalid(format!(
            "global rank {rank} outside [1, {catalog_size}]"
        )));
    }
    // non-target items in rank order, skipping the target's own rank
    let items: Vec<usize> = (1..=catalog_size).filter(|&i| i != rank).collect();
    let pool = items.len();
    let draws = n - 1;
    let total = pool.pow(draws as u32);
    let mut counts = vec![0u64; n];
    for mut code in 0..total {
        let mut outranks = 0;
        for _ in 0..draws {
            if items[code % pool] < rank {
                outranks += 1;
            }
            code /= pool;
        }
        counts[outranks] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// χ² goodness-of-fit of observed counts against expected probabilities,
/// merging adjacent cells until each expected count reaches 5.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareGof {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub rejected: bool,
}

pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64], alpha: f64) -> Result<ChiSquareGof> {
    if observed.len() != expected_probs.len() {
        return Err(Error::LengthMismatch {
            expected: expected_probs.len(),
            found: observed.len(),
        });
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        acc_obs += o as f64;
        acc_exp += p * total as f64;
        if acc_exp >= 5.0 {
            cells.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc_obs;
                last.1 += acc_exp;
            }
            None => return Err(Error::invalid("not enough expected mass for a χ² test")),
        }
    }
    if cells.len() < 2 {
        return Err(Error::invalid("fewer than 2 cells after merging"));
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = cells.len() - 1;
    let critical = ChiSquared::new(dof as f64)
        .expect("positive dof")
        .inverse_cdf(1.0 - alpha);
    Ok(ChiSquareGof {
        statistic,
        dof,
        critical,
        rejected: statistic > critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_solves_identity_and_diagonal() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(dense_solve_oracle(&id, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let diag = vec![vec![2.0, 0.0], vec![0.0, 4.0]];
        assert_eq!(dense_solve_oracle(&diag, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn oracle_detects_singular() {
        let sing = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(
            dense_solve_oracle(&sing, &[1.0, 2.0]),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn oracle_agrees_with_cholesky_backend() {
        // SPD matrix solved by both routes
        let mat = vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ];
        let rhs = [1.0, -2.0, 0.7];
        let ours = dense_solve_oracle(&mat, &rhs).unwrap();
        let na = nalgebra::Cholesky::new(nalgebra::DMatrix::from_fn(3, 3, |i, j| mat[i][j]))
            .unwrap()
            .solve(&nalgebra::DVector::from_column_slice(&rhs));
        for i in 0..3 {
            assert!((ours[i] - na[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(exhaustive_sampling_law(3, 2, 2).unwrap(), vec![0.5, 0.5]);
        let delta = exhaustive_sampling_law(5, 3, 1).unwrap();
        assert_eq!(delta, vec![1.0, 0.0, 0.0]);
        // N=4, n=3, R=3: Bin(r−1; 2, 2/3)
        let law = exhaustive_sampling_law(4, 3, 3).unwrap();
        let expect = [1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0];
        for (a, b) in law.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_check_binomial_case() {
        let res =
            weighted_multinomial_variance_check(&[1.0, 0.0], &[0.5, 0.5], 100, 20_000, 11).unwrap();
        assert_eq!(res.analytic, 25.0);
        assert!((res.analytic - res.empirical).abs() <= 4.0 * res.std_error);
    }

    #[test]
    fn variance_check_constant_sum() {
        let res = weighted_multinomial_variance_check(
            &[1.0, 1.0, 1.0],
            &[0.2, 0.5, 0.3],
            50,
            10_000,
            7,
        )
        .unwrap();
        assert!(res.analytic.abs() < 1e-12);
        assert_eq!(res.empirical, 0.0);
    }

    #[test]
    fn simplex_grid_forced_vertex() {
        let samples = vec![SampleRecord::new(0, 1, 2).unwrap()];
        let mle = simplex_grid_mle(&samples, 2, 0.01).unwrap();
        assert_eq!(mle.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        let samples = vec![SampleRecord::new(0, 1, 2).unwrap()];
        assert!(simplex_grid_mle(&samples, 5, 0.01).is_err());
        assert!(simplex_grid_mle(&samples, 3, 0.5).is_err());
    }

    #[test]
    fn gof_accepts_its_own_distribution() {
        // counts drawn exactly proportional to expectations pass trivially
        let probs = [0.5, 0.3, 0.15, 0.05];
        let observed: Vec<u64> = probs.iter().map(|p| (p * 10_000.0) as u64).collect();
        let gof = chi_square_gof(&observed, &probs, 0.001).unwrap();
        assert!(!gof.rejected);
        assert!(gof.statistic < 1e-9);
    }

    #[test]
    fn gof_rejects_shifted_distribution() {
        let probs = [0.25, 0.25, 0.25, 0.25];
        let observed = [4000u64, 1000, 2500, 2500];
        let gof = chi_square_gof(&observed, &probs, 0.001).unwrap();
        assert!(gof.rejected);
    }
}
