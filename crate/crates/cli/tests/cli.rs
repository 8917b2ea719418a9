use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lowrank"));
    c.env("LOWRANK_THREADS", "2");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn load(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, doc: &Value) {
    let schema = load(&schema_dir().join(format!("{schema_name}.schema.json")));
    let report = load(&schema_dir().join("selection-report.schema.json"));
    let validator = jsonschema::options()
        .with_resource(
            "urn:lowrank:schema:selection-report",
            jsonschema::Resource::from_contents(report).unwrap(),
        )
        .build(&schema)
        .unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}\n{doc:#}");
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("JSON error line");
    let v: Value = serde_json::from_str(line).unwrap();
    assert_valid("error", &v);
    v
}

fn write_matrix(dir: &Path, name: &str, rows: &[Vec<f64>]) -> String {
    let text: String = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|x| format!("{x:.17e}"))
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn write_generated(dir: &Path, name: &str, m: &lowrank::DMatrix<f64>) -> String {
    lowrank::io::write_matrix_csv(dir.join(name), m).unwrap();
    name.to_string()
}

/// Gaussian design, 100×8, with a rank-2 signal across 6 responses.
fn regression_files(dir: &Path) -> (String, String) {
    use lowrank::simulation::{gen_coef, gen_design, gen_response};
    let x = gen_design(100, 8, 0.3, 1).unwrap();
    let a = gen_coef(8, 6, 2, 1.0, 1).unwrap();
    let y = gen_response(&x, &a, 0.5, 1).unwrap();
    (
        write_generated(dir, "x.csv", &x),
        write_generated(dir, "y.csv", &y),
    )
}

fn noise_files(dir: &Path, m: usize, p: usize, n: usize) -> (String, String) {
    use lowrank::simulation::gen_design;
    let x = gen_design(m, p, 0.0, 5).unwrap();
    let y = gen_design(m, n, 0.0, 6).unwrap();
    (
        write_generated(dir, "x.csv", &x),
        write_generated(dir, "y.csv", &y),
    )
}

#[test]
fn skf_monte_carlo_one_by_one() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &[
            "skf", "--q", "1", "--n", "1", "--method", "mc", "--nsim", "100000", "--seed", "7",
            "--out", "t.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "r,s");
    assert_eq!(lines.len(), 2);
    let s: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let mean_abs = (2.0 / std::f64::consts::PI).sqrt();
    // sd of |N(0,1)| is √(1 − 2/π) ≈ 0.6; 5 standard errors at 10⁵ draws
    assert!((s - mean_abs).abs() < 5.0 * 0.61 / 100000f64.sqrt(), "{s}");

    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("command-summary", &summary);
    assert_eq!(summary["config"]["seed"], 7);
}

#[test]
fn skf_draws_and_echoes_seed() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &[
            "skf", "--q", "3", "--n", "4", "--method", "mc", "--nsim", "50", "--out", "t.csv",
        ],
    );
    assert!(out.status.success());
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    let seed = summary["config"]["seed"].as_u64().expect("seed echoed");
    let first = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();

    let seed_s = seed.to_string();
    let again = run(
        dir.path(),
        &[
            "skf", "--q", "3", "--n", "4", "--method", "mc", "--nsim", "50", "--seed", &seed_s,
            "--out", "u.csv",
        ],
    );
    assert!(again.status.success());
    assert_eq!(
        first,
        std::fs::read_to_string(dir.path().join("u.csv")).unwrap()
    );
}

#[test]
fn skf_marchenko_pastur_table() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &[
            "skf", "--q", "20", "--n", "30", "--method", "mp", "--out", "t.csv",
        ],
    );
    assert!(out.status.success());
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(table.lines().count(), 21);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("command-summary", &summary);
    assert_eq!(summary["config"]["resolved_method"], "marchenko-pastur");
}

#[test]
fn fit_diagonal_example() {
    let dir = TempDir::new().unwrap();
    let x = write_matrix(dir.path(), "x.csv", &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let y = write_matrix(dir.path(), "y.csv", &[vec![3.0, 0.0], vec![0.0, 1.0]]);
    let out = run(
        dir.path(),
        &[
            "fit",
            "--x",
            &x,
            "--y",
            &y,
            "--rank",
            "1",
            "--out-coef",
            "a.csv",
            "--out-fitted",
            "f.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("f.csv")).unwrap(),
        "3,0\n0,0\n"
    );
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("command-summary", &summary);
    assert_eq!(summary["rss"], 1.0);
}

#[test]
fn fit_round_trip_to_twelve_digits() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regression_files(dir.path());
    let out = run(
        dir.path(),
        &[
            "fit",
            "--x",
            &x,
            "--y",
            &y,
            "--rank",
            "2",
            "--out-coef",
            "a.csv",
        ],
    );
    assert!(out.status.success());

    let xm = lowrank::io::read_matrix_csv(dir.path().join(&x)).unwrap();
    let ym = lowrank::io::read_matrix_csv(dir.path().join(&y)).unwrap();
    let want = lowrank::reduced_rank::fit_path(&xm, &ym, lowrank::reduced_rank::RankTol::Auto)
        .unwrap()
        .coefficients(2)
        .unwrap();
    let got = lowrank::io::read_matrix_csv(dir.path().join("a.csv")).unwrap();
    assert_eq!(got.shape(), want.shape());
    for (g, w) in got.iter().zip(want.iter()) {
        assert!((g - w).abs() <= 1e-11 * w.abs().max(1e-300), "{g} vs {w}");
    }
}

#[test]
fn select_reports_validate() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regression_files(dir.path());
    let cases: [&[&str]; 4] = [
        &["--method", "kf"],
        &["--method", "kf-known", "--sigma2", "0.25"],
        &["--method", "rsc", "--lambda", "0.5"],
        &["--method", "rsci", "--k", "2"],
    ];
    for extra in cases {
        let mut args = vec![
            "select", "--x", &x, "--y", &y, "--seed", "1", "--out", "r.json",
        ];
        args.extend_from_slice(extra);
        let out = run(dir.path(), &args);
        assert!(
            out.status.success(),
            "{extra:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let report = load(&dir.path().join("r.json"));
        assert_valid("selection-report", &report);
        assert_eq!(report["r_hat"], 2, "{extra:?} {report}");
        assert!(report["config"]["r_max"].is_u64());
        assert_eq!(report["config"]["skf"]["seed"], 1);
    }
}

#[test]
fn select_rsci_full_row_rank_exits_three() {
    let dir = TempDir::new().unwrap();
    let (x, y) = noise_files(dir.path(), 8, 12, 5);
    let out = run(
        dir.path(),
        &[
            "select", "--x", &x, "--y", &y, "--method", "rsci", "--out", "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["code"], "variance-not-estimable");
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn select_argument_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regression_files(dir.path());
    let cases: [&[&str]; 4] = [
        &["--method", "kf-known"],
        &["--method", "rsc"],
        &["--method", "kf-known", "--sigma2", "1", "--k", "0.5"],
        &["--method", "kf", "--unknown-flag", "1"],
    ];
    for extra in cases {
        let mut args = vec!["select", "--x", &x, "--y", &y, "--out", "r.json"];
        args.extend_from_slice(extra);
        let out = run(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{extra:?}");
        assert_eq!(stderr_json(&out)["error"]["code"], "argument");
    }
    let ok = run(
        dir.path(),
        &[
            "select",
            "--x",
            &x,
            "--y",
            &y,
            "--out",
            "r.json",
            "--method",
            "kf-known",
            "--sigma2",
            "1",
            "--k",
            "0.5",
            "--allow-sub-minimal",
        ],
    );
    assert!(ok.status.success());
}

#[test]
fn select_infeasible_r_max_exits_three() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regression_files(dir.path());
    // nm = 600; K·S(6)² + 1 exceeds it at K = 20
    let out = run(
        dir.path(),
        &[
            "select", "--x", &x, "--y", &y, "--method", "kf", "--k", "20", "--r-max", "6", "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["code"], "infeasible");
}

#[test]
fn io_errors_exit_four() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &[
            "fit",
            "--x",
            "missing.csv",
            "--y",
            "missing.csv",
            "--rank",
            "1",
            "--out-coef",
            "a.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["code"], "io");
    let out = run(
        dir.path(),
        &[
            "skf",
            "--q",
            "2",
            "--n",
            "2",
            "--method",
            "mp",
            "--out",
            "no/such/dir/t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn malformed_csv_is_argument_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("x.csv"), "1,2\n3\n").unwrap();
    let out = run(
        dir.path(),
        &[
            "fit",
            "--x",
            "x.csv",
            "--y",
            "x.csv",
            "--rank",
            "1",
            "--out-coef",
            "a.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["code"], "parse");
}

#[test]
fn cv_report_validates_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regression_files(dir.path());
    for method in ["kf", "rsci", "rsc"] {
        let grid = if method == "rsc" {
            "0.1,0.5,2"
        } else {
            "1.2:3.0:0.2"
        };
        let args = [
            "cv", "--x", &x, "--y", &y, "--method", method, "--grid", grid, "--folds", "5",
            "--seed", "9",
        ];
        let first = run(dir.path(), &[&args[..], &["--out", "a.json"]].concat());
        assert!(
            first.status.success(),
            "{method}: {}",
            String::from_utf8_lossy(&first.stderr)
        );
        let second = run(dir.path(), &[&args[..], &["--out", "b.json"]].concat());
        assert!(second.status.success());
        let a = load(&dir.path().join("a.json"));
        assert_valid("cv-report", &a);
        assert_eq!(a, load(&dir.path().join("b.json")));
        assert_eq!(a["report"]["r_hat"], 2);
    }
}

#[test]
fn cv_default_grid_echoed() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regression_files(dir.path());
    let out = run(
        dir.path(),
        &[
            "cv", "--x", &x, "--y", &y, "--method", "kf", "--out", "a.json",
        ],
    );
    assert!(out.status.success());
    let a = load(&dir.path().join("a.json"));
    assert_eq!(a["config"]["grid"].as_array().unwrap().len(), 10);
    assert_eq!(a["config"]["folds"], 10);
    assert!(a["config"]["seed"].is_u64());
}

#[test]
fn simulate_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"m": 30, "p": 25, "n": 10, "r_true": 2, "rho": [0.1, 0.5], "b": [0.5],
                  "replicates": 4, "seed": 5,
                  "estimators": [{"method": "kf"}, {"method": "rsci"}, {"method": "kf-cv", "folds": 3, "grid": [1.5, 2.0]}]}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--out-json",
            "res.json",
            "--out-csv",
            "res.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let res = load(&dir.path().join("res.json"));
    assert_valid("simulation-result", &res);
    let csv = std::fs::read_to_string(dir.path().join("res.csv")).unwrap();
    assert!(csv.starts_with("replicate,estimator,ratio,r_hat"));
    assert_eq!(
        csv.lines().count(),
        1 + res["records"].as_array().unwrap().len()
    );
    assert_eq!(res["records"].as_array().unwrap().len(), 2 * 4 * 3);
}

#[test]
fn simulate_without_seed_echoes_one() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"m": 20, "p": 4, "n": 4, "r_true": 1, "rho": 0.2, "b": 1.0, "replicates": 2,
                  "estimators": [{"method": "kf"}]}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--out-json",
            "res.json",
            "--out-csv",
            "res.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(load(&dir.path().join("res.json"))["config"]["seed"].is_u64());
}

#[test]
fn simulate_rejects_unknown_config_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"m": 20, "p": 4, "n": 4, "r_true": 1, "rho": 0.2, "b": 1.0, "replicates": 2, "seed": 1,
                  "estimators": [{"method": "kf"}], "typo": true}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--out-json",
            "res.json",
            "--out-csv",
            "res.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_setting_is_argument_error() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("LOWRANK_THREADS", "many")
        .args([
            "skf", "--q", "2", "--n", "2", "--method", "mp", "--out", "t.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
