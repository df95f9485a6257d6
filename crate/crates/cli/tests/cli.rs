use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn boxrelax(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxrelax"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let j = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}

#[test]
fn theory_solves_for_target_rate() {
    let dir = TempDir::new().unwrap();
    let out = boxrelax(dir.path(), &["theory", "--p", "1000", "--sigma2", "1", "--lambda-target", "1.1"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("theory.json")).unwrap()).unwrap();
    assert_eq!(report, saved);
    assert!((report["lambda_p"].as_f64().unwrap() - 1.1).abs() < 1e-9);
    let delta = report["delta"].as_f64().unwrap();
    assert!(delta > 1.0 && delta < 20.0);
    let p0 = report["p_correct_poisson"].as_f64().unwrap();
    assert!((p0 - (-1.1f64).exp()).abs() < 1e-9);
}

#[test]
fn theory_at_given_ratio() {
    let dir = TempDir::new().unwrap();
    let out = boxrelax(dir.path(), &["theory", "--p", "400", "--sigma2", "1", "--delta", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let tau = report["tau_p"].as_f64().unwrap();
    let f = report["f_p"].as_f64().unwrap();
    let a = report["a_p_star"].as_f64().unwrap();
    assert!((a - f / tau).abs() < 1e-12 * a);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["theory", "--p", "100", "--sigma2", "1"][..],
        &["theory", "--p", "100", "--sigma2", "1", "--delta", "1", "--lambda-target", "1"][..],
        &["--threads", "zero", "theory", "--p", "100", "--sigma2", "1", "--delta", "1"][..],
        &["--threads", "0", "theory", "--p", "100", "--sigma2", "1", "--delta", "1"][..],
        &["theory", "--p", "100", "--sigma2", "-1", "--delta", "1"][..],
        &["--tol", "0", "theory", "--p", "100", "--sigma2", "1", "--delta", "1"][..],
        &["phase", "--alpha", "1", "--sigma2", "1"][..],
        &["frobnicate"][..],
    ] {
        let out = boxrelax(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(boxrelax(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = boxrelax(dir.path(), &["decode", "--input", "/nonexistent/instance.json"]);
    assert_eq!(out.status.code(), Some(2));
}

const INSTANCE: &str = r#"{
  "n": 3, "p": 2, "sigma2": 0.0, "seed_trace": null,
  "beta": [-1, 1],
  "A": [1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
  "w": [0.0, 0.0, 0.0]
}"#;

#[test]
fn decode_recovers_noiseless_instance() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("instance.json");
    fs::write(&input, INSTANCE).unwrap();
    let out = boxrelax(dir.path(), &["decode", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sol: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["n_errors"], 0);
    assert_eq!(sol["beta_hat"], serde_json::json!([-1, 1]));
    assert_eq!(sol["converged"], true);
}

#[test]
fn decode_with_tiny_budget_warns() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("instance.json");
    let noisy = INSTANCE.replace("\"w\": [0.0, 0.0, 0.0]", "\"w\": [0.3, -0.2, 0.4]");
    fs::write(&input, noisy).unwrap();
    let out = boxrelax(dir.path(), &["--tol", "1e-300", "decode", "--input", input.to_str().unwrap(), "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("solution.json").exists());
}

const CONFIG: &str = r#"{
  "grid": [{"p": 30, "delta": 1.0, "sigma2": 0.5}, {"p": 20, "delta": 2.0, "sigma2": 0.2}],
  "trials": 4,
  "master_seed": 11
}"#;

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, CONFIG).unwrap();
    let run = |sub: &str, threads: &str| {
        let out_dir = dir.path().join(sub);
        let out = boxrelax(&out_dir, &["--threads", threads, "simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for name in ["trials.csv", "summaries.csv", "summaries.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (header, rows) = csv(&a.join("summaries.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(column(&header, &rows, "trials_used"), vec![4.0, 4.0]);
    let (_, trials) = csv(&a.join("trials.csv"));
    assert_eq!(trials.len(), 8);

    // A different seed changes the draws.
    let c = dir.path().join("c");
    let out = boxrelax(&c, &["--seed", "12", "simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(fs::read(a.join("trials.csv")).unwrap(), fs::read(c.join("trials.csv")).unwrap());
}

#[test]
fn simulate_record_levels() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, CONFIG.replace("\"trials\": 4", "\"trials\": 2, \"record_level\": \"full_vectors\"")).unwrap();
    let out = boxrelax(&dir.path().join("full"), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let vectors: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("full/vectors.json")).unwrap()).unwrap();
    let vectors = vectors.as_array().unwrap();
    assert_eq!(vectors.len(), 4);
    assert_eq!(vectors[0]["x_star"].as_array().unwrap().len(), 30);

    fs::write(&cfg, CONFIG.replace("\"trials\": 4", "\"trials\": 2, \"record_level\": \"summary\"")).unwrap();
    let out = boxrelax(&dir.path().join("summary"), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!dir.path().join("summary/trials.csv").exists());
    assert!(dir.path().join("summary/summaries.csv").exists());
}

#[test]
fn simulate_rejects_invalid_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, CONFIG.replace("\"trials\": 4", "\"trials\": 0")).unwrap();
    let out = boxrelax(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(&cfg, "{ not json").unwrap();
    let out = boxrelax(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fig1_tables() {
    let dir = TempDir::new().unwrap();
    let out = boxrelax(dir.path(), &["--plot-script", "fig1", "--p", "20,30", "--trials", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv(&dir.path().join("fig1_pmf.csv"));
    for p in ["20", "30"] {
        let sel: Vec<_> = rows.iter().filter(|r| r[0] == p).cloned().collect();
        let total: f64 = column(&header, &sel, "empirical_pmf").iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let lambdas = column(&header, &sel, "lambda_p");
        assert!(lambdas.iter().all(|l| *l == lambdas[0]));
    }
    let (header, rows) = csv(&dir.path().join("fig1_summary.csv"));
    assert_eq!(column(&header, &rows, "trials_used"), vec![12.0, 12.0]);
    assert!(dir.path().join("fig1_trials.csv").exists());
    assert!(fs::read_to_string(dir.path().join("plot_fig1.py")).unwrap().contains("fig1_pmf.csv"));
}

#[test]
fn phase_and_gumbel_tables() {
    let dir = TempDir::new().unwrap();
    let out = boxrelax(dir.path(), &["phase", "--p", "30", "--alpha", "0.5,1,2", "--trials", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv(&dir.path().join("phase.csv"));
    let pred = column(&header, &rows, "p_correct_poisson_prediction");
    assert!(pred.windows(2).all(|w| w[0] < w[1]));
    let sigma2 = column(&header, &rows, "sigma2");
    assert!(sigma2.windows(2).all(|w| w[0] > w[1]));
    let (lo, hat, hi) = (
        column(&header, &rows, "ci_lo"),
        column(&header, &rows, "p_correct_hat"),
        column(&header, &rows, "ci_hi"),
    );
    for k in 0..rows.len() {
        assert!(lo[k] <= hat[k] && hat[k] <= hi[k]);
    }

    let out = boxrelax(dir.path(), &["gumbel", "--p", "30", "--x", "-1,0,2", "--trials", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv(&dir.path().join("gumbel.csv"));
    assert_eq!(column(&header, &rows, "x"), vec![-1.0, 0.0, 2.0]);
    let g = column(&header, &rows, "gumbel_prediction");
    assert!(g.windows(2).all(|w| w[0] < w[1]));
    assert!(((-(-0.0f64).exp()).exp() - g[1]).abs() < 1e-12);
}

#[test]
fn loo_tables() {
    let dir = TempDir::new().unwrap();
    let out = boxrelax(dir.path(), &["loo", "--p", "30", "--instances", "2", "--coords", "3", "--v-points", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv(&dir.path().join("loo_g.csv"));
    assert_eq!(rows.len(), 2 * 3 * 5);
    let v = column(&header, &rows, "v");
    let g = column(&header, &rows, "g_value");
    let q = column(&header, &rows, "quad_value");
    for k in 0..rows.len() {
        if v[k] == 0.0 {
            assert_eq!(q[k], 0.0);
            assert_eq!(g[k], 0.0);
        }
    }
    let (_, coords) = csv(&dir.path().join("loo_coords.csv"));
    assert_eq!(coords.len(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("loo_summary.json")).unwrap()).unwrap();
    assert!(summary["median_abs_gap"].as_f64().unwrap() >= 0.0);
}
