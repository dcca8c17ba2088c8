//! Command-line harness for sampled-rank metric estimation.
//!
//! Workflow: `synth` ground-truth ranks (or bring your own file), `sample`
//! them, `estimate` global metrics from the samples, and `compare`
//! estimators against the exact truth over repeated runs. `verify` runs
//! the built-in oracle suite.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rankeval_core::binomial::{rank_likelihood, ConditionalMatrix};
use rankeval_core::em::{em_fit, EmConfig};
use rankeval_core::experiment::{
    model_seed, repeat_estimates, run_experiment, synth_ranks, synth_ranks_from_pmf,
    winner_accuracy, EstimatorSpec, ExperimentConfig, PriorSpec, RankSource, Sampler,
};
use rankeval_core::io;
use rankeval_core::lstsq::{equal_sample_size, weighted_rhs, AdjustedSolver};
use rankeval_core::metrics::{
    global_metric, metric_value, naive_sampled_metric, plugin_metric_from_pmf,
};
use rankeval_core::oracle;
use rankeval_core::sampling::{efficiency_analysis, simulate_adaptive, simulate_fixed, AdaptiveConfig};
use rankeval_core::{MetricFamily, MetricSpec, RankPmf, SampleRecord};

#[derive(Parser)]
#[command(
    name = "rankeval",
    version,
    about = "Estimate global top-K recommendation metrics from sampled ranks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a ground-truth ranks file from a Zipf law or a pmf file
    Synth {
        #[arg(long)]
        catalog_size: usize,
        #[arg(long)]
        users: usize,
        /// Zipf exponent for the rank distribution
        #[arg(long, default_value_t = 1.2, conflicts_with = "pmf")]
        zipf: f64,
        /// Draw ranks from this pmf file instead of a Zipf law
        #[arg(long)]
        pmf: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory (writes ranks.csv)
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate item sampling over a ranks file
    Sample {
        #[arg(value_enum)]
        mode: SampleMode,
        #[arg(long)]
        ranks: PathBuf,
        #[arg(long)]
        catalog_size: usize,
        /// Fixed sample-set size
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Adaptive initial size
        #[arg(long, default_value_t = 100)]
        n0: usize,
        /// Adaptive terminal size
        #[arg(long, default_value_t = 3200)]
        nmax: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory (writes samples.csv)
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate global metrics from a samples file
    Estimate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        catalog_size: usize,
        #[command(flatten)]
        estimation: EstimationArgs,
        /// Output directory (writes estimates.csv)
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute exact global metric curves from a ranks file
    Evaluate {
        #[arg(long)]
        ranks: PathBuf,
        #[arg(long)]
        catalog_size: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![MetricArg::Recall, MetricArg::Ndcg, MetricArg::Ap])]
        metric: Vec<MetricArg>,
        #[arg(long, default_value_t = 50)]
        k_max: usize,
        /// Output directory (writes truth.csv)
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampling-efficiency analysis of an adaptive samples file
    Efficiency {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 100)]
        n0: usize,
        #[arg(long, default_value_t = 3200)]
        nmax: usize,
        /// Output directory (writes efficiency.csv)
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark estimators against exact truth over repeated samplings
    Compare {
        #[arg(long)]
        catalog_size: usize,
        /// User count for synthetic sources (ignored with --ranks)
        #[arg(long, default_value_t = 10_000)]
        users: usize,
        /// Zipf exponent for a synthetic ground truth
        #[arg(long, conflicts_with_all = ["pmf", "ranks"])]
        zipf: Option<f64>,
        /// Synthesize the ground truth from this pmf file
        #[arg(long, conflicts_with = "ranks")]
        pmf: Option<PathBuf>,
        /// Ranks file(s); two or more switch on winner prediction
        #[arg(long)]
        ranks: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SamplerArg::Fixed)]
        sampler: SamplerArg,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        n0: usize,
        #[arg(long, default_value_t = 3200)]
        nmax: usize,
        #[command(flatten)]
        estimation: EstimationArgs,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Run repeats serially (output is byte-identical either way)
        #[arg(long)]
        serial: bool,
        /// Output directory (writes report.csv and summary.json, plus
        /// winners.csv with several ranks files)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suite and exit nonzero on any failure
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// Flags shared by `estimate` and `compare`.
#[derive(Args)]
struct EstimationArgs {
    /// Comma-separated estimators: naive, mle, adaptive-mle, mn, bv
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        EstimatorArg::Naive, EstimatorArg::Mle, EstimatorArg::Mn, EstimatorArg::Bv,
    ])]
    estimators: Vec<EstimatorArg>,
    /// Prior for mn/bv: uniform, mle, or file:PATH
    #[arg(long, default_value = "mle")]
    prior: String,
    /// Bias-variance tradeoff weight for bv
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![MetricArg::Recall, MetricArg::Ndcg, MetricArg::Ap])]
    metric: Vec<MetricArg>,
    #[arg(long, default_value_t = 50)]
    k_max: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMode {
    Fixed,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Fixed,
    Adaptive,
    /// Full-information limit: n = N and r = R (identity model)
    Exact,
}

/// Display via the clap value name, so defaults render as on the CLI.
macro_rules! display_as_value_name {
    ($ty:ty) => {
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                let value = clap::ValueEnum::to_possible_value(self).expect("no skipped variants");
                f.write_str(value.get_name())
            }
        }
    };
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MetricArg {
    Recall,
    Ndcg,
    Ap,
}
display_as_value_name!(MetricArg);

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EstimatorArg {
    Naive,
    Mle,
    AdaptiveMle,
    Mn,
    Bv,
}
display_as_value_name!(EstimatorArg);

impl From<MetricArg> for MetricFamily {
    fn from(arg: MetricArg) -> Self {
        match arg {
            MetricArg::Recall => MetricFamily::Recall,
            MetricArg::Ndcg => MetricFamily::Ndcg,
            MetricArg::Ap => MetricFamily::Ap,
        }
    }
}

fn parse_prior(raw: &str) -> Result<PriorSpec> {
    match raw {
        "uniform" => Ok(PriorSpec::Uniform),
        "mle" => Ok(PriorSpec::Mle),
        other => match other.strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(PriorSpec::File(PathBuf::from(path))),
            _ => bail!("--prior must be `uniform`, `mle`, or `file:PATH`, got `{other}`"),
        },
    }
}

fn build_estimators(args: &EstimationArgs) -> Result<Vec<EstimatorSpec>> {
    let prior = parse_prior(&args.prior)?;
    if !(0.0..=1.0).contains(&args.gamma) {
        bail!("--gamma must lie in [0, 1], got {}", args.gamma);
    }
    Ok(args
        .estimators
        .iter()
        .map(|e| match e {
            EstimatorArg::Naive => EstimatorSpec::Naive,
            EstimatorArg::Mle => EstimatorSpec::Mle,
            EstimatorArg::AdaptiveMle => EstimatorSpec::AdaptiveMle,
            EstimatorArg::Mn => EstimatorSpec::Mn {
                prior: prior.clone(),
            },
            EstimatorArg::Bv => EstimatorSpec::Bv {
                gamma: args.gamma,
                prior: prior.clone(),
            },
        })
        .collect())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            catalog_size,
            users,
            zipf,
            pmf,
            seed,
            out,
        } => {
            ensure_out_dir(&out)?;
            let dataset = match pmf {
                Some(path) => {
                    let pmf = io::read_pmf(&path)?;
                    if pmf.catalog_size() != catalog_size {
                        bail!(
                            "pmf file covers {} ranks but --catalog-size is {catalog_size}",
                            pmf.catalog_size()
                        );
                    }
                    synth_ranks_from_pmf(&pmf, users, seed)?
                }
                None => synth_ranks(catalog_size, users, zipf, seed)?,
            };
            let path = out.join("ranks.csv");
            io::write_ranks(&path, &dataset)?;
            println!(
                "wrote {} ({} users, catalog {})",
                path.display(),
                dataset.user_count(),
                catalog_size
            );
        }

        Command::Sample {
            mode,
            ranks,
            catalog_size,
            n,
            n0,
            nmax,
            seed,
            out,
        } => {
            ensure_out_dir(&out)?;
            let dataset = io::read_ranks(&ranks, catalog_size)?;
            let records = match mode {
                SampleMode::Fixed => simulate_fixed(&dataset, n, seed)?,
                SampleMode::Adaptive => {
                    let cfg = AdaptiveConfig::new(n0, nmax)?;
                    simulate_adaptive(&dataset, &cfg, seed)
                }
            };
            let path = out.join("samples.csv");
            io::write_samples(&path, &records)?;
            let mean =
                records.iter().map(|r| r.sample_size as f64).sum::<f64>() / records.len() as f64;
            println!(
                "wrote {} ({} users, mean sample size {mean:.1})",
                path.display(),
                records.len()
            );
        }

        Command::Estimate {
            samples,
            catalog_size,
            estimation,
            out,
        } => {
            ensure_out_dir(&out)?;
            let records = io::read_samples(&samples)?;
            let estimators = build_estimators(&estimation)?;
            let metrics: Vec<MetricFamily> =
                estimation.metric.iter().map(|&m| m.into()).collect();
            let rows = estimate_rows(
                &records,
                catalog_size,
                &estimators,
                &metrics,
                estimation.k_max,
            )?;
            let path = out.join("estimates.csv");
            io::write_estimates_csv(&path, &rows)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }

        Command::Evaluate {
            ranks,
            catalog_size,
            metric,
            k_max,
            out,
        } => {
            ensure_out_dir(&out)?;
            let dataset = io::read_ranks(&ranks, catalog_size)?;
            let mut rows = Vec::new();
            for &m in &metric {
                let family: MetricFamily = m.into();
                for k in 1..=k_max {
                    let spec = MetricSpec::new(family, k)?;
                    rows.push((family.to_string(), k, global_metric(&dataset, spec)));
                }
            }
            let path = out.join("truth.csv");
            io::write_truth_csv(&path, &rows)?;
            println!("wrote {}", path.display());
        }

        Command::Efficiency {
            samples,
            n0,
            nmax,
            out,
        } => {
            ensure_out_dir(&out)?;
            let records = io::read_samples(&samples)?;
            let cfg = AdaptiveConfig::new(n0, nmax)?;
            let report = efficiency_analysis(&records, &cfg, records.len())?;
            let path = out.join("efficiency.csv");
            io::write_efficiency_csv(&path, &report)?;
            println!("size\tcount\tcost");
            for j in 0..report.sizes.len() {
                match report.costs[j] {
                    Some(c) => println!("{}\t{}\t{c:.2}", report.sizes[j], report.counts[j]),
                    None => println!("{}\t{}\t-", report.sizes[j], report.counts[j]),
                }
            }
            println!("wrote {}", path.display());
        }

        Command::Compare {
            catalog_size,
            users,
            zipf,
            pmf,
            ranks,
            sampler,
            n,
            n0,
            nmax,
            estimation,
            repeats,
            seed,
            serial,
            out,
        } => {
            ensure_out_dir(&out)?;
            let estimators = build_estimators(&estimation)?;
            let metrics: Vec<MetricFamily> =
                estimation.metric.iter().map(|&m| m.into()).collect();
            let sampler = match sampler {
                SamplerArg::Fixed => Sampler::Fixed { n, exact: false },
                SamplerArg::Adaptive => Sampler::Adaptive {
                    initial_size: n0,
                    terminal_size: nmax,
                },
                SamplerArg::Exact => Sampler::Fixed {
                    n: catalog_size,
                    exact: true,
                },
            };
            let base = ExperimentConfig {
                catalog_size,
                user_count: users,
                rank_source: RankSource::Zipf {
                    exponent: zipf.unwrap_or(1.2),
                },
                sampler,
                estimators,
                metrics,
                k_max: estimation.k_max,
                repeats,
                seed,
            };

            if ranks.len() >= 2 {
                compare_models(&base, &ranks, serial, &out)?;
            } else {
                let mut cfg = base;
                if let Some(path) = ranks.first() {
                    cfg.rank_source = RankSource::File(path.clone());
                } else if let Some(path) = pmf {
                    cfg.rank_source = RankSource::PmfFile(path);
                }
                let report = run_experiment(&cfg, !serial)?;
                io::write_report_csv(out.join("report.csv"), &report)?;
                io::write_summary_json(out.join("summary.json"), &report)?;
                println!("estimator\tmetric\tavg_rel_err");
                for entry in &report.entries {
                    println!(
                        "{}\t{}\t{:.4} ± {:.4}",
                        entry.estimator, entry.metric, entry.avg_rel_err_mean, entry.avg_rel_err_std
                    );
                }
                println!("wrote {} and {}", out.join("report.csv").display(), out.join("summary.json").display());
            }
        }

        Command::Verify { seed } => {
            let failures = run_verify(seed);
            if failures > 0 {
                bail!("{failures} oracle check(s) failed");
            }
            println!("all oracle checks passed");
        }
    }
    Ok(())
}

/// Estimate curves for a single samples file.
fn estimate_rows(
    records: &[SampleRecord],
    catalog_size: usize,
    estimators: &[EstimatorSpec],
    metrics: &[MetricFamily],
    k_max: usize,
) -> Result<Vec<(String, String, usize, f64)>> {
    let mut rows = Vec::new();
    let mut em_cache: Option<RankPmf> = None;
    let mut em_pmf = |records: &[SampleRecord]| -> Result<RankPmf> {
        if em_cache.is_none() {
            em_cache = Some(em_fit(records, catalog_size, &EmConfig::default())?.pmf);
        }
        Ok(em_cache.clone().unwrap())
    };

    for est in estimators {
        let label = est.label();
        match est {
            EstimatorSpec::Naive => {
                for &family in metrics {
                    for k in 1..=k_max {
                        let spec = MetricSpec::new(family, k)?;
                        rows.push((
                            label.clone(),
                            family.to_string(),
                            k,
                            naive_sampled_metric(records, spec),
                        ));
                    }
                }
            }
            EstimatorSpec::Mle | EstimatorSpec::AdaptiveMle => {
                let pmf = em_pmf(records)?;
                for &family in metrics {
                    for k in 1..=k_max {
                        let spec = MetricSpec::new(family, k)?;
                        rows.push((
                            label.clone(),
                            family.to_string(),
                            k,
                            plugin_metric_from_pmf(&pmf, spec),
                        ));
                    }
                }
            }
            EstimatorSpec::Mn { prior } | EstimatorSpec::Bv { prior, .. } => {
                let n = equal_sample_size(records)?;
                let cond = ConditionalMatrix::binomial(n, catalog_size)?;
                let prior_pmf = match prior {
                    PriorSpec::Uniform => RankPmf::uniform(catalog_size),
                    PriorSpec::Mle => em_pmf(records)?,
                    PriorSpec::File(path) => io::read_pmf(path)?,
                };
                if prior_pmf.catalog_size() != catalog_size {
                    bail!(
                        "prior covers {} ranks, expected {catalog_size}",
                        prior_pmf.catalog_size()
                    );
                }
                let solver = match est {
                    EstimatorSpec::Mn { .. } => {
                        AdjustedSolver::factor_mn(&prior_pmf, &cond, records.len())?
                    }
                    EstimatorSpec::Bv { gamma, .. } => {
                        AdjustedSolver::factor_bv(&prior_pmf, &cond, *gamma)?
                    }
                    _ => unreachable!(),
                };
                let p_tilde = rankeval_core::metrics::empirical_sampled_pmf(records, n)?;
                for &family in metrics {
                    for k in 1..=k_max {
                        let spec = MetricSpec::new(family, k)?;
                        let target: Vec<f64> = (1..=catalog_size)
                            .map(|rank| metric_value(spec, rank))
                            .collect();
                        let x = solver.solve_rhs(&weighted_rhs(&prior_pmf, &cond, &target));
                        let value = x
                            .values()
                            .iter()
                            .zip(p_tilde.probs())
                            .map(|(xi, pi)| xi * pi)
                            .sum();
                        rows.push((label.clone(), family.to_string(), k, value));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Winner prediction across several models (one ranks file each).
fn compare_models(
    base: &ExperimentConfig,
    ranks: &[PathBuf],
    serial: bool,
    out: &Path,
) -> Result<()> {
    let mut per_model = Vec::new();
    for (m, path) in ranks.iter().enumerate() {
        let cfg = ExperimentConfig {
            rank_source: RankSource::File(path.clone()),
            seed: model_seed(base.seed, m),
            ..base.clone()
        };
        let raw = repeat_estimates(&cfg, !serial)?;

        let report = run_experiment(&cfg, !serial)?;
        io::write_report_csv(out.join(format!("model_{m}_report.csv")), &report)?;
        io::write_summary_json(out.join(format!("model_{m}_summary.json")), &report)?;
        per_model.push(raw);
    }

    let mut rows = Vec::new();
    for (e_idx, est) in base.estimators.iter().enumerate() {
        for (m_idx, &family) in base.metrics.iter().enumerate() {
            for k in 1..=base.k_max {
                let truth: Vec<f64> = per_model
                    .iter()
                    .map(|raw| raw.truth[m_idx][k - 1])
                    .collect();
                let estimates: Vec<Vec<f64>> = (0..base.repeats)
                    .map(|rep| {
                        per_model
                            .iter()
                            .map(|raw| raw.curves[rep][e_idx][m_idx][k - 1])
                            .collect()
                    })
                    .collect();
                let matches = winner_accuracy(&truth, &estimates)?;
                rows.push((
                    family.to_string(),
                    k,
                    est.label(),
                    matches,
                    base.repeats,
                ));
            }
        }
    }
    io::write_winners_csv(out.join("winners.csv"), &rows)?;
    println!(
        "wrote {} plus per-model reports for {} models",
        out.join("winners.csv").display(),
        ranks.len()
    );
    Ok(())
}

/// The oracle suite behind `verify`: prints one line per check.
fn run_verify(seed: u64) -> usize {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("verify {name}: ok");
        } else {
            println!("verify {name}: FAIL ({detail})");
            failures += 1;
        }
    };

    // enumeration vs analytic sampling law
    let mut worst: f64 = 0.0;
    for catalog in 2..=6 {
        for n in 2..=4 {
            for rank in 1..=catalog {
                let law = oracle::exhaustive_sampling_law(catalog, n, rank).unwrap();
                for r in 1..=n {
                    let analytic = rank_likelihood(r, rank, n, catalog).unwrap();
                    worst = worst.max((law[r - 1] - analytic).abs());
                }
            }
        }
    }
    check(
        "exhaustive sampling law vs binomial",
        worst <= 1e-12,
        format!("max deviation {worst:e}"),
    );

    // simulator goodness of fit
    let mut gof_ok = true;
    let mut gof_detail = String::new();
    for (i, &(rank, n, catalog)) in
        [(50usize, 10usize, 100usize), (3, 8, 20), (117, 25, 400)].iter().enumerate()
    {
        let ds = rankeval_core::RankDataset::new(catalog, vec![rank; 100_000]).unwrap();
        let records = simulate_fixed(&ds, n, seed + i as u64).unwrap();
        let mut observed = vec![0u64; n];
        for rec in &records {
            observed[rec.sampled_rank - 1] += 1;
        }
        let expected: Vec<f64> = (1..=n)
            .map(|r| rank_likelihood(r, rank, n, catalog).unwrap())
            .collect();
        let gof = oracle::chi_square_gof(&observed, &expected, 0.001).unwrap();
        if gof.rejected {
            gof_ok = false;
            gof_detail = format!(
                "(R={rank}, n={n}, N={catalog}): χ²={:.2} > {:.2}",
                gof.statistic, gof.critical
            );
        }
    }
    check("fixed sampling χ² goodness of fit", gof_ok, gof_detail);

    // solver vs elimination oracle on the tiny instance
    let prior = RankPmf::uniform(3);
    let cond = ConditionalMatrix::binomial(2, 3).unwrap();
    let spec = MetricSpec::new(MetricFamily::Recall, 1).unwrap();
    let problem =
        rankeval_core::lstsq::LsProblem::for_metric(&prior, &cond, spec, 10).unwrap();
    let x = rankeval_core::lstsq::solve_mn(&problem).unwrap();
    let system = vec![
        vec![5.0 / 12.0 - 0.125 + 0.15, 1.0 / 12.0 - 0.025],
        vec![1.0 / 12.0 - 0.025, 5.0 / 12.0 - 0.125 + 0.15],
    ];
    let rhs = vec![1.0 / 3.0, 0.0];
    let reference = oracle::dense_solve_oracle(&system, &rhs).unwrap();
    let dev = (x.value(1) - reference[0]).abs().max((x.value(2) - reference[1]).abs());
    check(
        "mn solver vs elimination oracle",
        dev <= 1e-12,
        format!("deviation {dev:e}"),
    );

    // stationarity of both solvers on a random instance
    let catalog = 60;
    let n = 10;
    let big_prior = {
        let raw: Vec<f64> = (1..=catalog).map(|r| 1.0 / r as f64).collect();
        let total: f64 = raw.iter().sum();
        RankPmf::new(raw.iter().map(|w| w / total).collect()).unwrap()
    };
    let big_cond = ConditionalMatrix::binomial(n, catalog).unwrap();
    let spec = MetricSpec::new(MetricFamily::Ndcg, 10).unwrap();
    let big = rankeval_core::lstsq::LsProblem::for_metric(&big_prior, &big_cond, spec, 5_000)
        .unwrap();
    let x_mn = rankeval_core::lstsq::solve_mn(&big).unwrap();
    let x_bv = rankeval_core::lstsq::solve_bv(&big, 0.01).unwrap();
    let g_mn = rankeval_core::lstsq::mn_gradient(&x_mn, &big).unwrap();
    let g_bv = rankeval_core::lstsq::bv_gradient(&x_bv, &big, 0.01).unwrap();
    let gnorm = g_mn
        .iter()
        .chain(&g_bv)
        .fold(0.0_f64, |a, &v| a.max(v.abs()));
    check(
        "solver stationarity",
        gnorm <= 1e-8,
        format!("gradient norm {gnorm:e}"),
    );

    // weighted multinomial variance identity
    let mut var_ok = true;
    let mut var_detail = String::new();
    for (i, (w, t, m)) in [
        (vec![1.0, 0.0], vec![0.5, 0.5], 100usize),
        (vec![0.3, 0.7, 1.2], vec![0.2, 0.5, 0.3], 50),
        (vec![-1.0, 2.0, 0.5, 0.25], vec![0.1, 0.2, 0.3, 0.4], 80),
    ]
    .into_iter()
    .enumerate()
    {
        let res =
            oracle::weighted_multinomial_variance_check(&w, &t, m, 100_000, seed + 100 + i as u64)
                .unwrap();
        if (res.analytic - res.empirical).abs() > 4.0 * res.std_error {
            var_ok = false;
            var_detail = format!(
                "instance {i}: analytic {} vs empirical {}",
                res.analytic, res.empirical
            );
        }
    }
    check("weighted multinomial variance identity", var_ok, var_detail);

    // EM vs simplex grid
    let mut rng_state = seed;
    let mut next = move || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (rng_state >> 33) as f64 / (1u64 << 31) as f64
    };
    let mut em_ok = true;
    let mut em_detail = String::new();
    for catalog in [2usize, 3] {
        let samples: Vec<SampleRecord> = (0..300)
            .map(|u| {
                let rank = 1 + (next() * catalog as f64) as usize % catalog;
                let n = [3, 4, 6][u % 3];
                let theta = (rank - 1) as f64 / (catalog - 1) as f64;
                let r = 1 + (0..n - 1).filter(|_| next() < theta).count();
                SampleRecord::new(u, r, n).unwrap()
            })
            .collect();
        let fit = em_fit(
            &samples,
            catalog,
            &EmConfig {
                max_iters: 5_000,
                tol: 1e-12,
                ..EmConfig::default()
            },
        )
        .unwrap();
        let grid = oracle::simplex_grid_mle(&samples, catalog, 0.002).unwrap();
        let diff = fit
            .pmf
            .probs()
            .iter()
            .zip(grid.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff > 5e-3 {
            em_ok = false;
            em_detail = format!("N={catalog}: |em − grid|∞ = {diff:e}");
        }
    }
    check("em vs simplex grid mle", em_ok, em_detail);

    failures
}
