use std::path::Path;
use std::process::{Command, Output};

fn ptree(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ptree"));
    cmd.args(args).env_remove("PTREE_OUTPUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run ptree")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn uniform_csv(dir: &Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("u.csv");
    let text: String = (0..n).map(|i| format!("{}\n", (i as f64 + 0.5) / n as f64)).collect();
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn partition_prints_path_and_bounds() {
    let out = ptree(&["partition", "--point", "0.6", "--depth", "3"], &[]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "path 100\nbounds [0.5,0.625)\n");
    let out = ptree(&["partition", "--point", "0.6,0.3", "--depth", "2"], &[]);
    assert_eq!(stdout(&out), "path 10\nbounds [0.5,1)x[0,0.5)\n");
}

#[test]
fn entropy_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = uniform_csv(dir.path(), 500);
    let input = input.to_str().unwrap();
    let out = ptree(&["entropy", "--input", input, "--prior", "exp:c=1,beta=3", "--policy", "auto"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let est = &json["estimate"];
    for key in ["value", "posterior_variance", "truncation_level", "impact_level"] {
        assert!(!est[key].is_null(), "{key}");
    }
    // an evenly spread sample has entropy near that of the uniform
    assert!(est["value"].as_f64().unwrap().abs() < 0.01);
    assert_eq!(json["unit"], "nats");

    let bits = ptree(&["entropy", "--input", input, "--bits"], &[]);
    let json_bits: serde_json::Value = serde_json::from_str(&stdout(&bits)).unwrap();
    let ratio = est["value"].as_f64().unwrap() / json_bits["estimate"]["value"].as_f64().unwrap();
    assert!((ratio - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn malformed_input_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.1\nabc\n").unwrap();
    let out = ptree(&["entropy", "--input", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("line 2"));

    let out = ptree(&["entropy", "--input", "/nonexistent/x.csv"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let out = ptree(&["frobnicate"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let good = uniform_csv(dir.path(), 10);
    let out = ptree(&["entropy", "--input", good.to_str().unwrap(), "--policy", "greedy"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergent_schedule_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = uniform_csv(dir.path(), 10);
    let out = ptree(&["entropy", "--input", input.to_str().unwrap(), "--prior", "poly:rho=1"], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn fit_writes_a_normalised_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = uniform_csv(dir.path(), 64);
    let output = dir.path().join("fit.csv");
    let out = ptree(
        &["fit", "--input", input.to_str().unwrap(), "--depth", "5", "--output", output.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(&output).unwrap();
    let masses: Vec<f64> = reader.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(masses.len(), 32);
    assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn sample_is_controlled_by_seed() {
    let run = |seed: &str| stdout(&ptree(&["sample", "--depth", "4", "--draws", "3", "--seed", seed], &[]));
    assert_eq!(run("11"), run("11"));
    assert_ne!(run("11"), run("12"));
    assert_eq!(run("11").lines().count(), 1 + 3 * 16);
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"schema_version": 1, "kind": "entropy-convergence", "density": "uniform",
            "prior": "exp:c=1,beta=3", "sample_sizes": [50, 100], "seeds": [3, 1, 2]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = ptree(
        &["simulate", "entropy-convergence", "--config", config.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let mut pairs: Vec<(u64, u64)> = report
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    let sorted = {
        let mut p = pairs.clone();
        p.sort();
        p
    };
    assert_eq!(pairs, sorted);
    pairs.dedup();
    assert_eq!(pairs.len(), 6, "one block of rows per (n, seed)");
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("timing.csv").exists());
    assert!(out_dir.join("uniform_abs_error.svg").exists());

    // the environment variable redirects output when no flag is given
    let env_dir = dir.path().join("env");
    let out = ptree(
        &["simulate", "entropy-convergence", "--config", config.to_str().unwrap()],
        &[("PTREE_OUTPUT_DIR", env_dir.as_path())],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        std::fs::read(env_dir.join("report.csv")).unwrap(),
        report.as_bytes(),
        "same config and seeds give the same bytes"
    );

    let out = ptree(&["simulate", "spacing-law", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}
