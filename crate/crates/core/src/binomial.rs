//! The conditional sampled-rank model `P(r | R; n)`.
//!
//! A target at global rank `R` competes against `n−1` items drawn
//! uniformly with replacement from the `N−1` non-target items. Each draw
//! outranks the target with probability `θ_R = (R−1)/(N−1)`, so the
//! sampled rank satisfies `r − 1 ~ Bin(n−1, θ_R)`.

use crate::error::{Error, Result};

/// Probability that one uniformly drawn non-target item outranks a target
/// whose global rank is `rank`.
pub fn success_prob(rank: usize, catalog_size: usize) -> Result<f64> {
    if catalog_size < 2 {
        return Err(Error::invalid(format!(
            "catalog size must be at least 2, got {catalog_size}"
        )));
    }
    if rank < 1 || rank > catalog_size {
        return Err(Error::invalid(format!(
            "global rank {rank} outside [1, {catalog_size}]"
        )));
    }
    Ok((rank - 1) as f64 / (catalog_size - 1) as f64)
}

/// `ln k!` for `k = 0..=max`.
fn ln_factorial_table(max: usize) -> Vec<f64> {
    let mut table = vec![0.0; max + 1];
    for k in 1..=max {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

/// Binomial pmf `Bin(k; m, θ)` with interior `θ`, in the log domain.
fn binom_pmf_interior(k: usize, m: usize, ln_theta: f64, ln_comp: f64, lf: &[f64]) -> f64 {
    let ln_coeff = lf[m] - lf[k] - lf[m - k];
    let ln_p = ln_coeff + k as f64 * ln_theta + (m - k) as f64 * ln_comp;
    ln_p.exp().max(0.0)
}

/// Probability of observing sampled rank `r` in a size-`n` sample set when
/// the target's global rank is `rank`.
///
/// Exact at the boundary ranks: rank 1 pins `r = 1` and rank `N` pins
/// `r = n`.
pub fn rank_likelihood(r: usize, rank: usize, n: usize, catalog_size: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("sample size must be at least 2, got {n}")));
    }
    if r < 1 || r > n {
        return Err(Error::invalid(format!("sampled rank {r} outside [1, {n}]")));
    }
    let theta = success_prob(rank, catalog_size)?;
    let lf = ln_factorial_table(n - 1);
    Ok(likelihood_with_tables(r, n, theta, &lf))
}

fn likelihood_with_tables(r: usize, n: usize, theta: f64, lf: &[f64]) -> f64 {
    if theta == 0.0 {
        return if r == 1 { 1.0 } else { 0.0 };
    }
    if theta == 1.0 {
        return if r == n { 1.0 } else { 0.0 };
    }
    binom_pmf_interior(r - 1, n - 1, theta.ln(), (-theta).ln_1p(), lf)
}

/// Likelihood of one observation `(r, n)` as a function of the global
/// rank: `out[R-1] = P(r | R; n)` for `R = 1..=N`.
///
/// This is the per-observation kernel of the mixture-of-binomials model;
/// unlike [`ConditionalMatrix`] it is defined for `n > N` because sampling
/// with replacement can accumulate more draws than catalog items.
pub fn likelihood_kernel(r: usize, n: usize, catalog_size: usize) -> Result<Vec<f64>> {
    if catalog_size < 2 {
        return Err(Error::invalid(format!(
            "catalog size must be at least 2, got {catalog_size}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid(format!("sample size must be at least 2, got {n}")));
    }
    if r < 1 || r > n {
        return Err(Error::invalid(format!("sampled rank {r} outside [1, {n}]")));
    }
    let lf = ln_factorial_table(n - 1);
    let denom = (catalog_size - 1) as f64;
    Ok((1..=catalog_size)
        .map(|rank| likelihood_with_tables(r, n, (rank - 1) as f64 / denom, &lf))
        .collect())
}

/// Dense conditional matrix `A` with `A[R-1][r-1] = P(r | R; n)`.
///
/// Rows are pmfs over the sampled rank. Immutable once built; safe to
/// share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMatrix {
    catalog_size: usize,
    sample_size: usize,
    entries: Vec<f64>,
}

impl ConditionalMatrix {
    /// The binomial sampling model. Requires `2 ≤ n ≤ N`: a sample set
    /// handed to the least-squares estimators cannot exceed the catalog.
    pub fn binomial(sample_size: usize, catalog_size: usize) -> Result<Self> {
        if sample_size < 2 {
            return Err(Error::invalid(format!(
                "sample size must be at least 2, got {sample_size}"
            )));
        }
        if sample_size > catalog_size {
            return Err(Error::invalid(format!(
                "sample size {sample_size} exceeds catalog size {catalog_size}"
            )));
        }
        let n = sample_size;
        let lf = ln_factorial_table(n - 1);
        let denom = (catalog_size - 1) as f64;
        let mut entries = Vec::with_capacity(catalog_size * n);
        for rank in 1..=catalog_size {
            let theta = (rank - 1) as f64 / denom;
            if theta == 0.0 {
                entries.push(1.0);
                entries.extend(std::iter::repeat_n(0.0, n - 1));
            } else if theta == 1.0 {
                entries.extend(std::iter::repeat_n(0.0, n - 1));
                entries.push(1.0);
            } else {
                let (lt, lc) = (theta.ln(), (-theta).ln_1p());
                for r in 1..=n {
                    entries.push(binom_pmf_interior(r - 1, n - 1, lt, lc, &lf));
                }
            }
        }
        Ok(Self {
            catalog_size,
            sample_size,
            entries,
        })
    }

    /// The full-information limit: `n = N` and every sampled rank equals
    /// the global rank. Used by tests and the exact-mode pipeline.
    pub fn identity(catalog_size: usize) -> Result<Self> {
        if catalog_size < 2 {
            return Err(Error::invalid(format!(
                "catalog size must be at least 2, got {catalog_size}"
            )));
        }
        let mut entries = vec![0.0; catalog_size * catalog_size];
        for i in 0..catalog_size {
            entries[i * catalog_size + i] = 1.0;
        }
        Ok(Self {
            catalog_size,
            sample_size: catalog_size,
            entries,
        })
    }

    /// Builds the conditional model; `exact_mode` requests the identity
    /// matrix and is only valid at `n = N`.
    pub fn new(sample_size: usize, catalog_size: usize, exact_mode: bool) -> Result<Self> {
        if exact_mode {
            if sample_size != catalog_size {
                return Err(Error::invalid(format!(
                    "exact mode requires n = N, got n={sample_size}, N={catalog_size}"
                )));
            }
            Self::identity(catalog_size)
        } else {
            Self::binomial(sample_size, catalog_size)
        }
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog_size
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Row for global rank `rank` (1-based): the pmf of the sampled rank.
    pub fn row(&self, rank: usize) -> &[f64] {
        let n = self.sample_size;
        &self.entries[(rank - 1) * n..rank * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.sample_size)
    }

    /// Column sums `Σ_R P(r|R)`, the diagonal of `Λ₁`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.sample_size];
        for row in self.rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }
}
