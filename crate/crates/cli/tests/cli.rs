use std::path::Path;
use std::process::{Command, Output};

fn sphcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphcs")).args(args).output().expect("spawn sphcs")
}

fn ok(args: &[&str]) -> String {
    let out = sphcs(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Columns of the single data row of a CSV table, keyed by header.
fn data_row(csv: &str) -> Vec<(String, String)> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap();
    let row = lines.next().unwrap();
    header.split(',').map(String::from).zip(row.split(',').map(String::from)).collect()
}

fn field<'a>(row: &'a [(String, String)], name: &str) -> &'a str {
    &row.iter().find(|(k, _)| k == name).unwrap_or_else(|| panic!("no column {name}")).1
}

#[test]
fn tables_lists_grid_sizes() {
    let out = ok(&["tables", "--nmax", "15", "--oversample", "2"]);
    assert!(out.starts_with('#'));
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("dims,q,side,rows"));
    assert!(rows.iter().any(|r| r.starts_with("2,1,32,1024,")));
    assert!(rows.iter().any(|r| r.starts_with("2,2,64,4096,")));
}

#[test]
fn argument_errors_exit_one() {
    for args in [
        &["frobnicate"][..],
        &["experiment", "no-such-study"],
        &["experiment", "sparsity", "--nmax", "-3"],
        &["experiment", "recover", "--rows", "10", "--density", "0.5"],
        &["experiment", "recover", "--density", "1.5"],
        &["tables", "--oversample", "0"],
        &["measure", "--input", "/nonexistent/coefficients.txt"],
    ] {
        let out = sphcs(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(sphcs(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_measure_recover_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (coef, sh, meas, sel, trace, rec, table) = (
        dir.path().join("a.txt"),
        dir.path().join("sh.txt"),
        dir.path().join("y.txt"),
        dir.path().join("sel.csv"),
        dir.path().join("trace.csv"),
        dir.path().join("ahat.txt"),
        dir.path().join("recover.csv"),
    );
    ok(&["synth", "--nmax", "7", "--preset", "C1a", "--seed", "3", "--out", p(&coef), "--sh-out", p(&sh)]);
    ok(&["measure", "--input", p(&coef), "--rows", "150", "--seed", "5", "--out", p(&meas), "--selection-out", p(&sel)]);
    assert!(std::fs::read_to_string(&sel).unwrap().lines().count() > 150);
    ok(&[
        "recover",
        "--input",
        p(&meas),
        "--truth",
        p(&coef),
        "--trace",
        p(&trace),
        "--coefficients",
        p(&rec),
        "--out",
        p(&table),
    ]);
    let row = data_row(&std::fs::read_to_string(&table).unwrap());
    assert_eq!(field(&row, "status"), "Converged");
    assert_eq!(field(&row, "m_rows"), "150");
    assert!(field(&row, "snr_db").parse::<f64>().unwrap() > 20.0);
    let tr = std::fs::read_to_string(&trace).unwrap();
    assert!(tr.starts_with("iter,objective,residual\n1,"));
    assert!(rec.exists() && sh.exists());

    // Noisy path with a radius from the config file.
    let config = dir.path().join("solver.json");
    std::fs::write(&config, r#"{"max_iters": 20000, "tol_primal": 1e-6, "tol_dual": 1e-6}"#).unwrap();
    ok(&["measure", "--input", p(&coef), "--density", "0.5", "--noise-db", "-40", "--out", p(&meas)]);
    let out = ok(&["recover", "--input", p(&meas), "--truth", p(&coef), "--config", p(&config)]);
    assert_eq!(field(&data_row(&out), "status"), "Converged");

    std::fs::write(&config, r#"{"radius": 1, "bogus": 2}"#).unwrap();
    assert_eq!(sphcs(&["recover", "--input", p(&meas), "--config", p(&config)]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (coef, meas, config) = (dir.path().join("a.txt"), dir.path().join("y.txt"), dir.path().join("c.json"));
    ok(&["synth", "--nmax", "7", "--out", p(&coef)]);
    ok(&["measure", "--input", p(&coef), "--rows", "120", "--out", p(&meas)]);
    std::fs::write(&config, r#"{"max_iters": 3}"#).unwrap();
    let out = sphcs(&["recover", "--input", p(&meas), "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(2));
    // The table is still written.
    assert!(String::from_utf8(out.stdout).unwrap().contains("iterations"));
}

#[test]
fn experiment_csv_and_json_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sparsity.csv");
    let args = ["experiment", "sparsity", "--nmax", "5", "--trials", "4", "--seed", "9", "--format", "json"];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", p(&csv)]);
    ok(&with_out);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# experiment: sparsity\n"));
    assert!(text.contains("\n# seed: 9\n"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["name"], "sparsity");
    assert_eq!(json["columns"][0], "s_d");
    assert_eq!(json["rows"].as_array().unwrap().len(), text.lines().filter(|l| !l.starts_with('#')).count() - 1);

    let first = std::fs::read(&csv).unwrap();
    ok(&with_out);
    assert_eq!(first, std::fs::read(&csv).unwrap(), "reruns are byte identical");
}

#[test]
fn experiment_stdout_is_reproducible() {
    let args = ["experiment", "sweep-measurements", "--nmax", "4", "--trials", "2", "--rows", "30"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert!(a.lines().filter(|l| !l.starts_with('#')).count() == 4);
}
