use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn seqrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqrank"))
        .args(args)
        .env_remove("SEQRANK_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_manifest(artifact: &Path, subcommand: &str) {
    let mut name = artifact.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    let m = read_json(&artifact.with_file_name(name));
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["subcommand"], subcommand);
    assert!(m["config"].is_object());
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

#[test]
fn study1_smoke_emits_one_row_per_stopping_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("study1_desk.toml");
    let out = seqrank(&[
        "study1",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "10",
        "--c-list",
        "2^-5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = dir.path().join("study1_desk.csv");
    let rows = csv_rows(&csv);
    assert_eq!(rows[0].len(), 18);
    assert_eq!(rows[0][0], "study");
    assert_eq!(rows.len(), 3);
    let stopping: Vec<&str> = rows[1..].iter().map(|r| r[3].as_str()).collect();
    assert_eq!(stopping, ["T1", "T2"]);
    for r in &rows[1..] {
        assert_eq!(r[4], "0.03125");
        assert_eq!(r[6], "", "fixed_N is empty for sequential rules");
        assert_eq!(r[7], "10");
        assert!(r[16].parse::<f64>().unwrap() > 0.0);
    }
    assert_manifest(&csv, "study1");
    let plot = dir.path().join("study1_desk_ratio_plot.csv");
    assert_eq!(csv_rows(&plot).len(), 3);
    assert_manifest(&plot, "study1");
}

#[test]
fn study2_smoke_runs_matched_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("study2_k3.toml");
    let out = seqrank(&[
        "study2",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "5",
        "--c-list",
        "2^-5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("study2_k3.csv"));
    let proposed: Vec<&Vec<String>> = rows[1..].iter().filter(|r| r[2] == "optimal").collect();
    assert_eq!(proposed.len(), 2);
    for p in proposed {
        let n = p[10].parse::<f64>().unwrap().round().to_string();
        for sel in ["wald", "uniform"] {
            assert!(
                rows.iter().any(|r| r[2] == sel && r[6] == n),
                "no {sel} baseline at N={n}"
            );
        }
    }
    assert!(rows[1..].iter().all(|r| r[16].is_empty()), "no ratio column in study II");
    let plot = dir.path().join("study2_k3_kendall_plot.csv");
    assert_eq!(csv_rows(&plot)[0], ["policy", "mean_T", "mean_kendall", "se_kendall", "se_T"]);
    assert_manifest(&plot, "study2");
}

#[test]
fn solve_design_matches_closed_form_for_two_items() {
    let out = seqrank(&["solve-design", "--theta=-0.8473", "--c-list", "2^-15"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    let oracle = bernoulli_kl(sigmoid(0.8473), sigmoid(-0.4));
    let d = doc["d"].as_float().unwrap();
    assert!((d - oracle).abs() < 1e-6, "D = {d}, oracle {oracle}");
    assert!((d - 0.18218).abs() < 1e-3);
    let lambda = doc["lambda"].as_array().unwrap();
    assert_eq!(lambda.len(), 1);
    assert!((lambda[0].as_float().unwrap() - 1.0).abs() < 1e-12);
    let t_c = doc["t_c"].as_array().unwrap()[0].as_float().unwrap();
    assert!((t_c - 15.0 * 2f64.ln() / oracle).abs() < 1e-3);
    assert!(doc["gap"].as_float().unwrap() >= 0.0);
}

#[test]
fn solve_design_rejects_theta_outside_the_box() {
    let out = seqrank(&["solve-design", "--theta=-2.5"]);
    assert_ne!(code(&out), 0);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("kappa"), "{}", stderr(&out));
}

#[test]
fn solve_design_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("solve_design.toml");
    let args = [
        "solve-design",
        "--config",
        cfg.to_str().unwrap(),
        "--iters",
        "300",
        "--c-list",
        "2^-5,2^-10",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    let a = seqrank(&args);
    let b = seqrank(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let file = dir.path().join("design.toml");
    assert_eq!(std::fs::read(&file).unwrap(), a.stdout);
    assert_manifest(&file, "solve-design");
    let doc: toml::Table = String::from_utf8(a.stdout).unwrap().parse().unwrap();
    let lambda: f64 = doc["lambda"].as_array().unwrap().iter().map(|v| v.as_float().unwrap()).sum();
    assert!((lambda - 1.0).abs() < 1e-6);
    assert_eq!(doc["t_c"].as_array().unwrap().len(), 2);
}

fn trial(dir: &Path, extra: &[&str]) -> (Vec<Value>, Value) {
    let mut args = vec!["single-trial", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = seqrank(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = std::fs::read_to_string(dir.join("trajectory.jsonl")).unwrap();
    let records = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    (records, read_json(&dir.join("trial_summary.json")))
}

#[test]
fn single_trial_is_deterministic_under_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("single_trial.toml");
    let args = ["--config", cfg.to_str().unwrap(), "--seed", "11", "--c-list", "2^-5"];
    trial(a.path(), &args);
    trial(b.path(), &args);
    let read = |d: &Path| std::fs::read(d.join("trajectory.jsonl")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_manifest(&a.path().join("trajectory.jsonl"), "single-trial");
    assert_manifest(&a.path().join("trial_summary.json"), "single-trial");
}

#[test]
fn fixed_stopping_logs_exactly_n_records() {
    let dir = tempfile::tempdir().unwrap();
    for selection in ["optimal", "uniform", "wald"] {
        let (records, summary) = trial(dir.path(), &["--selection", selection, "--stopping", "fixed(12)", "--seed", "2"]);
        assert_eq!(records.len(), 12, "{selection}");
        assert_eq!(summary["stopping_time"], 12);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r["step"], i as u64 + 1);
            let pair = r["pair"].as_array().unwrap();
            let (a, b) = (pair[0].as_u64().unwrap(), pair[1].as_u64().unwrap());
            assert!(1 <= a && a < b && b <= 3);
            assert!(r["outcome"] == 0 || r["outcome"] == 1);
            assert_eq!(r["mle"].as_array().unwrap().len(), 3);
            assert!(r["t1_log_sum"].is_number());
        }
    }
}

#[test]
fn t2_final_record_clears_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (records, summary) = trial(dir.path(), &["--stopping", "T2", "--c-list", "2^-6", "--seed", "5"]);
    let last = records.last().unwrap();
    assert_eq!(last["step"], summary["stopping_time"]);
    let h = summary["threshold"].as_f64().unwrap();
    assert!(h > 6.0 * 2f64.ln());
    assert!(last["min_glr"].as_f64().unwrap() >= h);
    for r in &records[..records.len() - 1] {
        assert!(r["min_glr"].as_f64().unwrap() < h);
    }
}

#[test]
fn single_trial_with_given_theta_echoes_it() {
    let dir = tempfile::tempdir().unwrap();
    let (_, summary) = trial(dir.path(), &["--theta=-0.7,-1.5", "--stopping", "fixed(3)"]);
    assert_eq!(summary["theta"], serde_json::json!([0.0, -0.7, -1.5]));
    let out = seqrank(&["single-trial", "--theta=-0.7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("theta"));
}

#[test]
fn estimate_tc_writes_csv_for_each_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = seqrank(&[
        "estimate-tc",
        "--reps",
        "8",
        "--c-list",
        "2^-5,2^-10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let path = dir.path().join("e_tc.csv");
    let rows = csv_rows(&path);
    assert_eq!(rows[0], ["c", "e_tc_hat", "se_e_tc", "samples"]);
    assert_eq!(rows.len(), 3);
    let m1: f64 = rows[1][1].parse().unwrap();
    let m2: f64 = rows[2][1].parse().unwrap();
    assert!((m2 / m1 - 2.0).abs() < 1e-6, "E t_c scales with |ln c|");
    assert_manifest(&path, "estimate-tc");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "nmu_items = 3\n").unwrap();
    let out = seqrank(&["study1", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "unknown key");
    assert!(stderr(&out).contains("nmu_items"));

    let alpha = dir.path().join("alpha.toml");
    std::fs::write(&alpha, "[policy]\nalpha = 2.0\n").unwrap();
    let out = seqrank(&["study2", "--config", alpha.to_str().unwrap(), "--reps", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("policy.alpha"), "{}", stderr(&out));

    let out = seqrank(&["study1", "--c-list", "2^3", "--reps", "1"]);
    assert_eq!(code(&out), 2, "cost outside (0, 1)");

    let out = seqrank(&["study1", "--reps", "0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("reps"));

    let out = seqrank(&["study1", "--bogus"]);
    assert_eq!(code(&out), 2, "unknown flag");

    let missing = dir.path().join("missing.toml");
    let out = seqrank(&["study1", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "missing config file");

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = seqrank(&["estimate-tc", "--reps", "2", "--out", blocker.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "output dir is a file");

    let flat = dir.path().join("flat.toml");
    std::fs::write(&flat, "num_items = 2\n[policy_support]\nbox_bound = 2.0\n").unwrap();
    let out = seqrank(&["solve-design", "--config", flat.to_str().unwrap(), "--theta=0", "--c-list", "2^-5"]);
    assert_eq!(code(&out), 3, "tied scores cannot be told apart: {}", stderr(&out));
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_seqrank"))
            .args(["estimate-tc", "--reps", "4", "--c-list", "2^-5", "--out", dir.path().to_str().unwrap()])
            .env("SEQRANK_THREADS", env)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    let auto = run("0");
    assert_eq!(one.stdout, auto.stdout, "results do not depend on the thread count");
    assert_eq!(code(&run("many")), 2);
}
