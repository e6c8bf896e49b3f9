use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use overtensor_cli::config::Config;

fn overtensor(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_overtensor"))
        .args(args)
        .env("OVERTENSOR_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_sweep_writes_one_summary_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = overtensor(&["run", "--d", "8", "--r", "2", "--l", "3", "--m", "24", "--seeds", "1..10"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "seed,final_residual,epochs_used,iterations,success");
    assert_eq!(lines.len(), 11);
    assert_eq!(stdout(&o), summary);
    for seed in 1..=10 {
        let rows = std::fs::read_to_string(dir.path().join(format!("run_seed{seed}.csv"))).unwrap();
        assert!(rows.starts_with("iter,epoch,loss,residual,pbu_sq,path_len\n0,0,"));
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "--d", "6", "--r", "2", "--m", "10", "--epochs", "3", "--iters", "300", "--seeds", "4", "--format", "jsonl"];
    assert!(overtensor(&args, a.path()).status.success());
    assert!(overtensor(&args, b.path()).status.success());
    for name in ["run_seed4.jsonl", "summary.jsonl"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let first = std::fs::read_to_string(a.path().join("run_seed4.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = row.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["iter", "epoch", "loss", "residual", "pbu_sq", "path_len"] {
        assert!(keys.contains(&k));
    }
}

#[test]
fn vacuous_epsilon_succeeds_at_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let o = overtensor(&["run", "--epsilon", "10", "--seeds", "1..2"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with(",0,0,true")), "{out}");
}

#[test]
fn explicit_out_flag_beats_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = overtensor(
        &["run", "--epsilon", "10", "--out", flag_dir.path().to_str().unwrap()],
        env_dir.path(),
    );
    assert!(o.status.success());
    assert!(flag_dir.path().join("summary.csv").exists());
    assert!(!env_dir.path().join("summary.csv").exists());
}

#[test]
fn ground_truth_file_is_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.json");
    std::fs::write(&gt, r#"{"order": 3, "weights": [1.0], "components": [[1.0, 0.0, 0.0, 0.0]]}"#).unwrap();
    let o = overtensor(&["run", "--d", "4", "--m", "4", "--epochs", "5", "--gt", gt.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bad = overtensor(&["run", "--d", "5", "--gt", gt.to_str().unwrap()], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn localmin_reports_closed_form_losses() {
    let dir = tempfile::tempdir().unwrap();
    let o = overtensor(&["localmin", "--kind", "vanilla", "--d", "4", "--r", "2", "--l", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let loss: f64 = out.lines().find_map(|l| l.strip_prefix("loss: ")).unwrap().parse().unwrap();
    assert!((loss - 3.0).abs() < 1e-9);
    assert!(out.contains("certified: true"));

    let o = overtensor(&["localmin", "--kind", "2homo", "--d", "5", "--r", "1", "--l", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let loss: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("loss: ")).unwrap().parse().unwrap();
    assert!((loss - 3.0).abs() < 1e-9);
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["localmin", "--kind", "vanilla", "--d", "3", "--r", "3"],
        vec!["localmin", "--kind", "cubic"],
        vec!["run", "--seeds", "5..1"],
        vec!["run", "--format", "xml"],
        vec!["run", "--eta", "-1"],
        vec!["run", "--jobs", "0"],
        vec!["baseline", "--start", "nowhere"],
        vec!["lazybound", "--xgrid", "0:1"],
        vec!["run", "--unknown-flag"],
    ] {
        let o = overtensor(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn lazybound_grid_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = overtensor(&["lazybound", "--l", "4", "--d", "20,40,80", "--xgrid", "0:3.2:0.1"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "d,l,log_d_m,m,analytic_bound");
    assert_eq!(lines.len(), 1 + 3 * 33);
    assert!(lines[4].starts_with("20,4,0.3,"));
}

#[test]
fn lazybound_monte_carlo_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = overtensor(&["lazybound", "--l", "3", "--d", "4", "--mc", "--samples", "20000"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "d,l,log_d_m,m,analytic_bound,mc_estimate,mc_stderr,mc_samples");
    for row in lines {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8);
        assert_eq!(cols[7], "20000");
        let est: f64 = cols[5].parse().unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&est));
    }
}

#[test]
fn baseline_rows_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["baseline", "--seeds", "1..3", "--steps", "200"];
    let oa = overtensor(&args, a.path());
    let ob = overtensor(&args, b.path());
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(stdout(&oa), stdout(&ob));
    assert_eq!(stdout(&oa).lines().count(), 4);
    let series = std::fs::read_to_string(a.path().join("baseline_seed2.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 201);

    let o = overtensor(&["baseline", "--start", "localmin", "--d", "4", "--r", "2", "--steps", "1000"], a.path());
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let cols: Vec<f64> = row.split(',').take(3).map(|c| c.parse().unwrap()).collect();
    assert!((cols[1] - 3.0).abs() < 1e-9 && (cols[2] - cols[1]).abs() < 1e-9);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    std::fs::write(&cfg, "# small sweep\nd = 6\nr = 2\nm = 10\nepochs = 2\niters = 100\nseeds = 1..2\nepsilon = 0.05\n").unwrap();
    let o = overtensor(&["--config", cfg.to_str().unwrap(), "run", "--seeds", "7"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().starts_with("7,"));

    std::fs::write(&cfg, "kind = vanilla\n").unwrap();
    let o = overtensor(&["--config", cfg.to_str().unwrap(), "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

proptest! {
    #[test]
    fn config_round_trips(entries in prop::collection::btree_map("[a-z][a-z0-9_]{0,8}", "[A-Za-z0-9.,:_/-]{0,12}", 0..8)) {
        let mut c = Config::default();
        for (k, v) in &entries {
            c.set(k, v.clone());
        }
        let text = c.to_string();
        let parsed = Config::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(Config::parse(&parsed.to_string()).unwrap(), parsed);
    }
}
