//! End-to-end tests of the binary: pipelines, determinism, error paths.

use std::path::Path;
use std::process::{Command, Output};

fn rankeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankeval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn synth_sample_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    assert_ok(&rankeval(&[
        "synth", "--catalog-size", "200", "--users", "1000", "--zipf", "1.2", "--seed", "5",
        "--out", out,
    ]));
    let ranks = dir.path().join("ranks.csv");
    assert!(read(&ranks).starts_with("user_id,global_rank\n"));

    assert_ok(&rankeval(&[
        "sample", "fixed", "--ranks", ranks.to_str().unwrap(), "--catalog-size", "200", "--n",
        "25", "--seed", "7", "--out", out,
    ]));
    let samples = dir.path().join("samples.csv");
    let body = read(&samples);
    assert!(body.starts_with("user_id,sampled_rank,sample_size\n"));
    assert_eq!(body.lines().count(), 1001);

    assert_ok(&rankeval(&[
        "estimate", "--samples", samples.to_str().unwrap(), "--catalog-size", "200",
        "--estimators", "naive,mle,mn,bv", "--prior", "mle", "--gamma", "0.01", "--metric",
        "recall,ndcg", "--k-max", "10", "--out", out,
    ]));
    let estimates = read(&dir.path().join("estimates.csv"));
    assert!(estimates.starts_with("estimator,metric,K,estimate\n"));
    // 4 estimators × 2 metrics × 10 K values
    assert_eq!(estimates.lines().count(), 81);
    assert!(estimates.contains("mn_mle,"));
    assert!(estimates.contains("bv_mle,"));

    assert_ok(&rankeval(&[
        "evaluate", "--ranks", ranks.to_str().unwrap(), "--catalog-size", "200", "--k-max", "5",
        "--out", out,
    ]));
    let truth = read(&dir.path().join("truth.csv"));
    assert!(truth.starts_with("metric,K,value\n"));
    assert_eq!(truth.lines().count(), 16);
}

#[test]
fn adaptive_sample_and_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_ok(&rankeval(&[
        "synth", "--catalog-size", "300", "--users", "2000", "--zipf", "1.1", "--seed", "2",
        "--out", out,
    ]));
    let ranks = dir.path().join("ranks.csv");
    assert_ok(&rankeval(&[
        "sample", "adaptive", "--ranks", ranks.to_str().unwrap(), "--catalog-size", "300",
        "--n0", "10", "--nmax", "160", "--seed", "3", "--out", out,
    ]));
    assert_ok(&rankeval(&[
        "efficiency", "--samples", dir.path().join("samples.csv").to_str().unwrap(), "--n0",
        "10", "--nmax", "160", "--out", out,
    ]));
    let eff = read(&dir.path().join("efficiency.csv"));
    assert!(eff.starts_with("size,count,cost\n"));
    // schedule 10,20,40,80,160 plus the header
    assert_eq!(eff.lines().count(), 6);
    // terminal level never carries a cost
    assert!(eff.lines().last().unwrap().ends_with(','));

    // counts partition the users
    let total: usize = eff
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 2000);
}

#[test]
fn compare_is_deterministic_across_parallelism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let common = [
        "compare", "--catalog-size", "150", "--users", "800", "--zipf", "1.2", "--sampler",
        "fixed", "--n", "20", "--estimators", "naive,mle,mn", "--prior", "mle", "--metric",
        "recall", "--k-max", "10", "--repeats", "4", "--seed", "11",
    ];
    let mut serial: Vec<&str> = common.to_vec();
    serial.extend(["--serial", "--out", dir_a.path().to_str().unwrap()]);
    assert_ok(&rankeval(&serial));
    let mut parallel: Vec<&str> = common.to_vec();
    parallel.extend(["--out", dir_b.path().to_str().unwrap()]);
    assert_ok(&rankeval(&parallel));

    for name in ["report.csv", "summary.json"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between serial and parallel runs");
    }
    let summary = read(&dir_a.path().join("summary.json"));
    assert!(summary.contains("\"seed\": 11"));
    assert!(summary.contains("\"avg_rel_err_mean\""));
}

#[test]
fn compare_multiple_models_emits_winners() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // two synthetic "models": the sharper Zipf wins every top-K metric
    for (name, zipf, seed) in [("a", "1.6", "21"), ("b", "0.8", "22")] {
        let sub = dir.path().join(name);
        std::fs::create_dir_all(&sub).unwrap();
        assert_ok(&rankeval(&[
            "synth", "--catalog-size", "100", "--users", "1500", "--zipf", zipf, "--seed", seed,
            "--out", sub.to_str().unwrap(),
        ]));
    }
    let ranks_a = dir.path().join("a/ranks.csv");
    let ranks_b = dir.path().join("b/ranks.csv");
    assert_ok(&rankeval(&[
        "compare", "--catalog-size", "100", "--ranks", ranks_a.to_str().unwrap(), "--ranks",
        ranks_b.to_str().unwrap(), "--sampler", "fixed", "--n", "25", "--estimators",
        "naive,mle", "--metric", "recall", "--k-max", "10", "--repeats", "6", "--seed", "1",
        "--out", out,
    ]));

    let winners = read(&dir.path().join("winners.csv"));
    assert!(winners.starts_with("metric,K,estimator,matches,repeats\n"));
    assert_eq!(winners.lines().count(), 21); // 2 estimators × 10 K
    assert!(dir.path().join("model_0_report.csv").exists());
    assert!(dir.path().join("model_1_summary.json").exists());

    // the gap between the models is large; the MLE estimator must pick
    // the winner in every repeat at K = 10
    let mle_k10 = winners
        .lines()
        .find(|l| l.starts_with("recall,10,mle,"))
        .unwrap();
    assert!(mle_k10.ends_with(",6,6"), "{mle_k10}");
}

#[test]
fn malformed_inputs_fail_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("ranks.csv");
    std::fs::write(&bad, "user_id,global_rank\n0,5\n1,0\n").unwrap();
    let out = rankeval(&[
        "sample", "fixed", "--ranks", bad.to_str().unwrap(), "--catalog-size", "10", "--n", "5",
        "--seed", "1", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3"), "stderr: {msg}");

    // adaptive estimators reject least-squares routes
    std::fs::write(
        dir.path().join("samples.csv"),
        "user_id,sampled_rank,sample_size\n0,1,4\n1,2,8\n",
    )
    .unwrap();
    let out = rankeval(&[
        "estimate", "--samples", dir.path().join("samples.csv").to_str().unwrap(),
        "--catalog-size", "10", "--estimators", "mn", "--prior", "uniform", "--k-max", "3",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("mixed sample sizes"), "stderr: {msg}");
}

#[test]
fn verify_suite_passes() {
    let out = rankeval(&["verify", "--seed", "4"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all oracle checks passed"));
    assert_eq!(stdout.matches(": ok").count(), 6);
}
