use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BUNDLED: &str = include_str!("../../core/data/paper_tables.scenario");

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/paper_tables.scenario")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shadowcost"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn with_bundled(args: &[&str]) -> Output {
    let path = bundled();
    let mut full = vec![args[0], path.to_str().unwrap()];
    full.extend_from_slice(&args[1..]);
    run(&full)
}

fn scenario_file(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn without_sweeps() -> String {
    BUNDLED.split("[sweeps]").next().unwrap().to_string()
}

#[test]
fn validate_accepts_bundled_file_with_warning() {
    let o = with_bundled(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("valid (5 assets, 4 views)"), "{out}");
    assert!(out.contains("warning"));
}

#[test]
fn validate_rejects_asymmetric_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let text = BUNDLED.replacen("[0.05, 0.02, 0.04, 0.03, 0.01]", "[0.05, 0.025, 0.04, 0.03, 0.01]", 1);
    assert_ne!(text, BUNDLED, "fixture edit must apply");
    let p = scenario_file(&dir, "bad.scenario", &text);
    let o = run(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("symmetric"), "{}", stderr(&o));
}

#[test]
fn empty_file_is_a_syntax_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario_file(&dir, "empty.scenario", "");
    let o = run(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("<root>"), "{}", stderr(&o));
}

#[test]
fn unknown_key_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = BUNDLED.replacen("[market]\n", "[market]\nbogus = 1\n", 1);
    let p = scenario_file(&dir, "extra.scenario", &text);
    let o = run(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("market"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["report", "/definitely/not/here.scenario", "--table", "4"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn no_real_equilibrium_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"schema_version = 1

[market]
assets = ["only"]
sigma = [[1.0]]
pi_c = [3.0]
risk_free_rate = 0.0
expected_market_return = 2.0
sigma_m = 1.0

[shadow_costs]
lambda = [1.0]
lambda_cov = [[1.0]]
cross_cov = [[0.0]]
tau = 0.5
"#;
    let p = scenario_file(&dir, "nonreal.scenario", text);
    let o = run(&["equilibrium", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no real equilibrium"));
}

#[test]
fn table_four_and_five() {
    let out = stdout(&with_bundled(&["report", "--table", "4"]));
    assert!(
        out.contains("w_capm                  -0.0587  0.0154  0.0225  0.0813  0.0540"),
        "{out}"
    );
    assert!(
        out.contains("w_incomplete            -0.0394  -0.0004  0.0025  0.0605  0.0063"),
        "{out}"
    );
    assert!(
        out.contains("capm                    return 0.0076  risk 0.0259"),
        "{out}"
    );
    let out = stdout(&with_bundled(&["report", "--table", "5"]));
    assert!(out.contains("7.4175e-4"), "{out}");
    assert!(out.contains("0.2967"), "{out}");
}

#[test]
fn table_six_and_seven() {
    let out = stdout(&with_bundled(&["report", "--table", "6"]));
    assert!(
        out.contains("gamma=0                 return 0.0103  risk 0.0359"),
        "{out}"
    );
    assert!(
        out.contains("gamma=1                 return 0.0273  risk 0.0584"),
        "{out}"
    );
    let out = stdout(&with_bundled(&["report", "--table", "7"]));
    assert!(
        out.contains("BL                      return 0.0351  risk 0.0663"),
        "{out}"
    );
    assert!(
        out.contains("gamma=1                 return 0.0762  risk 0.0976"),
        "{out}"
    );
}

#[test]
fn unknown_table_is_rejected() {
    let o = with_bundled(&["report", "--table", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn full_precision_report_is_byte_identical() {
    let a = with_bundled(&["report", "--table", "7", "--full-precision"]);
    let b = with_bundled(&["report", "--table", "7", "--full-precision", "--sequential"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("e-2"));
}

#[test]
fn figure_three_has_sign_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3.csv");
    let o = with_bundled(&["figure", "--id", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("sign_lambda"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn figure_with_empty_sweep_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario_file(&dir, "nosweep.scenario", &without_sweeps());
    let out = dir.path().join("fig5.csv");
    let o = run(&[
        "figure",
        p.to_str().unwrap(),
        "--id",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn unknown_figure_and_unwritable_output() {
    let o = with_bundled(&["figure", "--id", "9", "--out", "/tmp/unused.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = with_bundled(&["figure", "--id", "1", "--out", "/definitely/not/here/fig.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn posterior_json_matches_table_seven() {
    let o = with_bundled(&["posterior", "--gamma", "1", "--c", "0.5", "--tau", "0.5", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let w: Vec<f64> = serde_json::from_value(v["allocation"]["weights"].clone()).unwrap();
    let expected = [0.0314, 0.0382, -0.0245, 0.3997, 0.6657];
    for (a, b) in w.iter().zip(expected) {
        assert!((a - b).abs() < 5e-4, "{w:?}");
    }
}

#[test]
fn confidence_moves_the_view_gap() {
    let gap = |c: &str| {
        let o = with_bundled(&["posterior", "--gamma", "1", "--c", c, "--json"]);
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["views"]["gap"].as_f64().unwrap()
    };
    assert!(gap("0.01") > gap("0.5"));
    assert!(gap("0.5") > gap("0.99"));
}

#[test]
fn allocate_objectives() {
    let o = with_bundled(&["allocate", "--objective", "min_variance", "--gamma", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = with_bundled(&["allocate", "--objective", "risk_budget", "--sigma-cap", "0.1", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let w: Vec<f64> = serde_json::from_value(v["allocation"]["weights"].clone()).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(v["allocation"]["risk"].as_f64().unwrap() <= 0.1 * (1.0 + 1e-10));

    let o = with_bundled(&["allocate", "--objective", "risk_constrained"]);
    assert_eq!(o.status.code(), Some(2), "missing cap");
    let o = with_bundled(&["allocate", "--objective", "risk_budget", "--sigma-cap", "0.001"]);
    assert_eq!(o.status.code(), Some(2), "infeasible cap");
    assert!(stderr(&o).contains("minimum-variance"));
}

#[test]
fn information_set_must_cover_the_views() {
    let o = with_bundled(&["allocate", "--objective", "unconstrained", "--assets", "0,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the information set"), "{}", stderr(&o));
    let o = with_bundled(&["allocate", "--objective", "unconstrained", "--assets", "asset1,nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sampling_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path| {
        with_bundled(&[
            "sample",
            "--gamma",
            "1",
            "--seed",
            "9",
            "--draws",
            "5000",
            "--out",
            out.to_str().unwrap(),
        ])
    };
    assert_eq!(args(&a).status.code(), Some(0));
    let o = run(&[
        "--sequential",
        "sample",
        bundled().to_str().unwrap(),
        "--gamma",
        "1",
        "--seed",
        "9",
        "--draws",
        "5000",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert_eq!(ta.lines().count(), 5001);
}

#[test]
fn canonical_output_reparses_to_itself() {
    let o = with_bundled(&["canonical"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let p = scenario_file(&dir, "canon.scenario", &stdout(&o));
    let again = run(&["canonical", p.to_str().unwrap()]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn equilibrium_with_gamma_adds_reference_row() {
    let out = stdout(&with_bundled(&["equilibrium", "--gamma", "1"]));
    assert!(out.contains("Table 5"));
    assert!(out.contains("w gamma=1"));
    assert!(!out.contains("w gamma=0"));
}
