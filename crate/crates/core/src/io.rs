//! CSV and JSON interchange formats.
//!
//! * ranks:   `user_id,global_rank` (1-based ranks)
//! * samples: `user_id,sampled_rank,sample_size`
//! * pmf:     `rank,prob` (one row per rank `1..=N`)
//! * report:  `estimator,metric,K,true,estimate_mean,estimate_std,rel_err_mean`
//! * summary: JSON with aggregate stats and the resolved config
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write→read cycle reproduces values exactly and identical reports are
//! identical bytes.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::ErrorReport;
use crate::sampling::EfficiencyReport;
use crate::types::{RankDataset, RankPmf, SampleRecord};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn open_reader(path: &Path, expected_headers: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected_headers {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected_headers.join(","), got.join(",")),
        ));
    }
    Ok(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<T> {
    let line = record_line(record);
    let raw = record
        .get(index)
        .ok_or_else(|| parse_err(path, line, format!("missing field `{name}`")))?;
    raw.trim()
        .parse::<T>()
        .map_err(|_| parse_err(path, line, format!("cannot parse `{raw}` as {name}")))
}

/// Read a ranks file; `catalog_size` bounds the valid rank range.
pub fn read_ranks(path: impl AsRef<Path>, catalog_size: usize) -> Result<RankDataset> {
    let path = path.as_ref();
    let mut reader = open_reader(path, &["user_id", "global_rank"])?;
    let mut ranks = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let user: u64 = parse_field(path, &record, 0, "user_id")?;
        if !seen.insert(user) {
            return Err(parse_err(path, line, format!("duplicate user_id {user}")));
        }
        let rank: usize = parse_field(path, &record, 1, "global_rank")?;
        if rank < 1 || rank > catalog_size {
            return Err(parse_err(
                path,
                line,
                format!("global rank {rank} outside [1, {catalog_size}]"),
            ));
        }
        ranks.push(rank);
    }
    if ranks.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    RankDataset::new(catalog_size, ranks)
}

pub fn write_ranks(path: impl AsRef<Path>, dataset: &RankDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["user_id", "global_rank"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (user, &rank) in dataset.ranks().iter().enumerate() {
        w.write_record([user.to_string(), rank.to_string()])
            .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let mut reader = open_reader(path, &["user_id", "sampled_rank", "sample_size"])?;
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let user: usize = parse_field(path, &record, 0, "user_id")?;
        let rank: usize = parse_field(path, &record, 1, "sampled_rank")?;
        let size: usize = parse_field(path, &record, 2, "sample_size")?;
        let sample = SampleRecord::new(user, rank, size)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(samples)
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["user_id", "sampled_rank", "sample_size"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for s in samples {
        w.write_record([
            s.user_index.to_string(),
            s.sampled_rank.to_string(),
            s.sample_size.to_string(),
        ])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a pmf file; the catalog size is the largest rank present, and
/// every rank `1..=N` must appear exactly once.
pub fn read_pmf(path: impl AsRef<Path>) -> Result<RankPmf> {
    let path = path.as_ref();
    let mut reader = open_reader(path, &["rank", "prob"])?;
    let mut rows: Vec<(usize, f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&record);
        let rank: usize = parse_field(path, &record, 0, "rank")?;
        let prob: f64 = parse_field(path, &record, 1, "prob")?;
        if rank < 1 {
            return Err(parse_err(path, line, "ranks are 1-based"));
        }
        rows.push((rank, prob, line));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let n = rows.iter().map(|r| r.0).max().unwrap();
    let mut probs = vec![f64::NAN; n];
    for (rank, prob, line) in rows {
        if !probs[rank - 1].is_nan() {
            return Err(parse_err(path, line, format!("duplicate rank {rank}")));
        }
        probs[rank - 1] = prob;
    }
    if let Some(missing) = probs.iter().position(|p| p.is_nan()) {
        return Err(parse_err(path, 0, format!("missing rank {}", missing + 1)));
    }
    RankPmf::new(probs)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_pmf(path: impl AsRef<Path>, pmf: &RankPmf) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["rank", "prob"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (i, &p) in pmf.probs().iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{p}")])
            .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Per-K curves of every estimator and metric, plot-ready.
pub fn write_report_csv(path: impl AsRef<Path>, report: &ErrorReport) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "estimator",
        "metric",
        "K",
        "true",
        "estimate_mean",
        "estimate_std",
        "rel_err_mean",
    ])
    .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for entry in &report.entries {
        for stat in &entry.per_k {
            let rel = stat.rel_err_mean.map(|v| format!("{v}")).unwrap_or_default();
            w.write_record([
                entry.estimator.clone(),
                entry.metric.to_string(),
                stat.k.to_string(),
                format!("{}", stat.true_value),
                format!("{}", stat.estimate_mean),
                format!("{}", stat.estimate_std),
                rel,
            ])
            .map_err(|e| parse_err(path, 0, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    estimator: &'a str,
    metric: &'a str,
    avg_rel_err_mean: f64,
    avg_rel_err_std: f64,
    skipped_k: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a crate::experiment::ExperimentConfig,
    results: Vec<SummaryRow<'a>>,
}

/// Aggregate statistics plus the resolved configuration, for audit.
pub fn write_summary_json(path: impl AsRef<Path>, report: &ErrorReport) -> Result<()> {
    let path = path.as_ref();
    let summary = Summary {
        config: &report.config,
        results: report
            .entries
            .iter()
            .map(|e| SummaryRow {
                estimator: &e.estimator,
                metric: e.metric.name(),
                avg_rel_err_mean: e.avg_rel_err_mean,
                avg_rel_err_std: e.avg_rel_err_std,
                skipped_k: e.skipped_k,
            })
            .collect(),
    };
    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    let body = serde_json::to_string_pretty(&summary)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    file.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
    file.write_all(b"\n").map_err(|e| io_err(path, e))
}

/// Sampling-efficiency table: `size,count,cost` with an empty cost at the
/// terminal level and at levels no user escaped at.
pub fn write_efficiency_csv(path: impl AsRef<Path>, report: &EfficiencyReport) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["size", "count", "cost"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for j in 0..report.sizes.len() {
        let cost = report.costs[j].map(|v| format!("{v}")).unwrap_or_default();
        w.write_record([
            report.sizes[j].to_string(),
            report.counts[j].to_string(),
            cost,
        ])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Plain estimate curves (no ground truth): `estimator,metric,K,estimate`.
pub fn write_estimates_csv(
    path: impl AsRef<Path>,
    rows: &[(String, String, usize, f64)],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["estimator", "metric", "K", "estimate"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (estimator, metric, k, value) in rows {
        w.write_record([
            estimator.clone(),
            metric.clone(),
            k.to_string(),
            format!("{value}"),
        ])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Exact metric curves from a ranks file: `metric,K,value`.
pub fn write_truth_csv(
    path: impl AsRef<Path>,
    rows: &[(String, usize, f64)],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["metric", "K", "value"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (metric, k, value) in rows {
        w.write_record([metric.clone(), k.to_string(), format!("{value}")])
            .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Winner-prediction counts: `metric,K,estimator,matches,repeats`.
pub fn write_winners_csv(
    path: impl AsRef<Path>,
    rows: &[(String, usize, String, usize, usize)],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["metric", "K", "estimator", "matches", "repeats"])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (metric, k, estimator, matches, repeats) in rows {
        w.write_record([
            metric.clone(),
            k.to_string(),
            estimator.clone(),
            matches.to_string(),
            repeats.to_string(),
        ])
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
