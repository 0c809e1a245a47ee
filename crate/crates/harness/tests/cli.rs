//! End-to-end runs of the `tmc` binary.

use std::path::Path;
use std::process::{Command, Output};

use tmc_harness::record::{read_csv, EstimateRecord};

fn tmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmc")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn strip_times(records: &[EstimateRecord]) -> Vec<(String, usize, usize, u64, u64, u64)> {
    records
        .iter()
        .map(|r| (r.method.clone(), r.k, r.n, r.seed, r.estimate.to_bits(), r.ground_truth.to_bits()))
        .collect()
}

const SMALL: &str = "[small]\nmodel = \"hierarchical\"\nn = 5\nseeds = 3\ntmc = [2, 4]\nsmc = [4]\niwae = [8]\nvae = [1]\n";

#[test]
fn sweep_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = tmc(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = tmc(&["--threads", "1", "sweep", "--config", &cfg, "--out", b.to_str().unwrap()]);
    assert!(out.status.success());

    let ra = read_csv(&a).unwrap();
    assert_eq!(ra.len(), 15);
    assert!(std::fs::read_to_string(&a).unwrap().starts_with("method,K,N,seed,estimate,ground_truth,elapsed_ns\n"));
    assert_eq!(strip_times(&ra), strip_times(&read_csv(&b).unwrap()));
    assert!(ra.iter().all(|r| r.n == 5 && r.ground_truth == ra[0].ground_truth));
}

#[test]
fn seed_flag_shifts_sampling_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[x]\nmodel = \"chain\"\nn = 4\nseeds = 2\ntmc = [3]\n");
    let out = dir.path().join("o.csv");
    assert!(tmc(&["--seed", "40", "sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let seeds: Vec<u64> = read_csv(&out).unwrap().iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![40, 41]);
}

#[test]
fn chain_sweep_favours_nonfactorised_proposals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "out = \"unused.csv\"\n[chain]\nmodel = \"chain\"\nn = 100\nseeds = 20\ntmc = [2, 8, 32]\ntmc-nonfactorised = [2, 8, 32]\n",
    );
    let out = dir.path().join("o.csv");
    assert!(tmc(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let records = read_csv(&out).unwrap();
    assert_eq!(records.len(), 120);
    for k in [2, 8, 32] {
        let mean = |m: &str| {
            let v: Vec<f64> = records.iter().filter(|r| r.method == m && r.k == k).map(|r| r.estimate).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean("tmc-nonfactorised") >= mean("tmc"), "K={k}");
    }
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[x]\nmodel = \"chain\"\nn = 3\nmcmc = [2]\n");
    let out = tmc(&["sweep", "--config", &bad, "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown method \"mcmc\""));

    let good = write(dir.path(), "good.toml", SMALL);
    let out = tmc(&["sweep", "--config", &good, "--out", "/nonexistent-dir/o.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent-dir/o.csv"));

    let out = tmc(&["sweep", "--config", &good]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_graph_prints_factors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[h]\nmodel = \"hierarchical\"\nn = 2\ntmc = [3]\n");
    let out = dir.path().join("o.csv");
    let r = tmc(&["--dump-graph", "sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("# h tmc K=3 seed=0\nfactor 0 scope=[k0] shape=[3]\nfactor 1 scope=[k1,k0] shape=[3,3]\n"), "{err}");
}

#[test]
fn verify_passes_across_seeds() {
    for seed in 0..5 {
        let out = tmc(&["--seed", &seed.to_string(), "verify"]);
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "seed {seed}:\n{text}");
        assert_eq!(text.matches("PASS").count(), 8);
    }
}

#[test]
fn verify_detects_injected_fault() {
    let out = tmc(&["verify", "--filter", "brute-force", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL brute-force"));
}

#[test]
fn bench_cost_writes_medians() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cost.csv");
    let r = tmc(&["bench-cost", "--layers", "4,4", "--k", "1,8", "--reps", "3", "--hidden", "16", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "K,elapsed_ns");
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("8,"));
    assert!(lines[1][2..].parse::<u64>().unwrap() > 0);
}
