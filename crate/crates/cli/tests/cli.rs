use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_robust-phase");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Column names and numeric rows of a CSV output, skipping `#` lines.
fn table(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn delta_sweep_has_figure_one_columns() {
    let out = stdout(&[
        "mse-sweep",
        "--axis",
        "delta",
        "--mu",
        "0.5",
        "--filters",
        "kalman,robust,optimal,sql",
        "--points",
        "201",
    ]);
    assert!(out.starts_with("# robust-phase 0.1.0\n# spec: {\"command\":\"mse-sweep\""));
    let (cols, rows) = table(&out);
    assert_eq!(
        cols,
        [
            "delta",
            "sigma2_kalman",
            "sigma2_robust",
            "q_plus",
            "sigma2_opt",
            "p_sql",
            "flags"
        ]
    );
    assert_eq!(rows.len(), 201);
    let first: Vec<f64> = rows[0][..6].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[0], -1.0);
    assert!(rel(first[1], 6.5307e-2) < 1e-4);
    assert!(rel(first[3], 6.1939e-2) < 1e-4);
    assert!(rel(first[2], first[3]) < 1e-10);
    // 17 significant digits
    assert_eq!(rows[0][1].split('e').next().unwrap().replace('.', "").len(), 17);
    assert!(rows.iter().all(|r| r[6].is_empty()));
}

fn assert_round_trip(dir: &Path, args: &[&str], ext: &str) {
    let a = dir.join(format!("a.{ext}"));
    let b = dir.join(format!("b.{ext}"));
    let mut first = args.to_vec();
    first.extend(["--output", a.to_str().unwrap()]);
    assert!(run(&first).status.success());
    let out = run(&["--config", a.to_str().unwrap(), "--output", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!x.is_empty());
    assert_eq!(x, y, "{args:?}");
}

#[test]
fn header_spec_reruns_to_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    assert_round_trip(
        dir.path(),
        &["mse-sweep", "--axis", "alpha2", "--points", "17", "--mu", "0.8"],
        "csv",
    );
    assert_round_trip(
        dir.path(),
        &["worst-case", "--points", "11", "--format", "json"],
        "json",
    );
    assert_round_trip(dir.path(), &["efficiency", "--mu", "0.8", "--points", "9"], "csv");
    assert_round_trip(dir.path(), &["noise-power", "--points", "9", "--lo", "-0.5"], "csv");
    assert_round_trip(
        dir.path(),
        &["two-time", "--mu", "0.5", "--delta", "1", "--points", "20"],
        "csv",
    );
    assert_round_trip(dir.path(), &["design", "--filters", "sql,robust"], "csv");
    assert_round_trip(dir.path(), &["verify", "--draws", "50", "--seed", "3"], "csv");
    assert_round_trip(
        dir.path(),
        &[
            "simulate", "--steps", "200000", "--traj", "2", "--seed", "5", "--tau", "0,1e-6",
        ],
        "csv",
    );
}

#[test]
fn plain_json_spec_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(
        &path,
        r#"{"command":"design","filters":["kalman"],"params":{"lambda":59000.0,"kappa":19000.0,"alpha2":1000000.0},"uncertainty":{"mu":0.5,"delta":-1.0}}"#,
    )
    .unwrap();
    let out = stdout(&["--config", path.to_str().unwrap()]);
    let (_, rows) = table(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "kalman");
    let sigma2: f64 = rows[0][6].parse().unwrap();
    assert!(rel(sigma2, 6.5307e-2) < 1e-4);
}

#[test]
fn json_rows_mirror_csv_rows() {
    let args = ["mse-sweep", "--points", "5", "--filters", "kalman,sql"];
    let csv = stdout(&args);
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&json_args)).unwrap();
    assert_eq!(doc["version"], "0.1.0");
    assert_eq!(doc["spec"]["command"], "mse-sweep");
    let (cols, rows) = table(&csv);
    let jrows = doc["rows"].as_array().unwrap();
    assert_eq!(jrows.len(), rows.len());
    for (j, r) in jrows.iter().zip(&rows) {
        for (c, v) in cols.iter().zip(r).take(cols.len() - 1) {
            assert_eq!(j[c].as_f64().unwrap(), v.parse::<f64>().unwrap(), "{c}");
        }
    }
}

#[test]
fn two_time_table_has_the_four_matched_curves() {
    let out = stdout(&[
        "two-time",
        "--mu",
        "0.5",
        "--delta",
        "1",
        "--tau-max",
        "2e-5",
        "--points",
        "30",
    ]);
    assert!(out.contains("# kappa_n_kalman = "));
    let (cols, rows) = table(&out);
    assert_eq!(
        cols,
        [
            "tau",
            "sub_kalman",
            "effective_for_kalman",
            "sub_robust",
            "effective_for_robust",
            "flags"
        ]
    );
    assert_eq!(rows.len(), 30);
    assert_eq!(rows[29][0].parse::<f64>().unwrap(), 2e-5);
    // matched at zero lag by construction
    let r0: Vec<f64> = rows[0][1..5].iter().map(|s| s.parse().unwrap()).collect();
    assert!(rel(r0[1], r0[0]) < 1e-10 && rel(r0[3], r0[2]) < 1e-10);
}

#[test]
fn verify_passes_on_the_reference_seed() {
    let out = run(&["verify", "--draws", "1000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let (cols, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(
        cols,
        ["check", "draws", "violations", "min_margin", "tolerance", "flags"]
    );
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r[2] == "0"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["mse-sweep", "--mu", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["mse-sweep", "--axis", "nope"]).status.code(), Some(1));
    assert_eq!(
        run(&["mse-sweep", "--lo", "0.5", "--hi", "-0.5"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["simulate", "--dt", "1e-6"]).status.code(), Some(1));
    assert_eq!(run(&["--config", "/nonexistent/spec.json"]).status.code(), Some(1));
    let numerical = run(&[
        "two-time", "--lambda", "1e8", "--kappa", "1e2", "--alpha2", "1e2", "--mu", "0.99", "--delta", "1",
    ]);
    assert_eq!(numerical.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&numerical.stderr).contains("prior bound"));
}

#[test]
fn simulate_reports_each_filter_against_theory() {
    let out = stdout(&[
        "simulate",
        "--steps",
        "1000000",
        "--traj",
        "2",
        "--filters",
        "kalman,sql",
    ]);
    let (cols, rows) = table(&out);
    assert_eq!(
        cols,
        ["filter", "mse", "std_error", "analytic", "z", "n_effective", "flags"]
    );
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let z: f64 = r[4].parse().unwrap();
        assert!(z.abs() < 4.0, "{r:?}");
        assert!(r[5].parse::<u64>().unwrap() > 100);
    }
}
