use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_robinfield");

fn robinfield(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("RF_THREADS", t),
        None => cmd.env_remove("RF_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let text = format!("{body}\n[output]\ndirectory = {}\nprefix = {name}\n", dir.join(name).display());
    let path = dir.join(format!("{name}.cfg"));
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn summary(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(name).join(format!("{name}_summary.jsonl"))).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn list_names_every_kind() {
    let out = robinfield(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in ["robin", "metric", "curvature", "asymptotics", "distance", "hyperbolicity", "comparability", "invariance", "stability", "validate"] {
        assert!(text.lines().any(|l| l.starts_with(kind)), "{kind} missing");
    }
}

#[test]
fn malformed_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad", "[domain]\nkind = ball\nn = 2\n\n[experiment]\nkind = robin\norder = two\n");
    let out = robinfield(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 7") && err.contains("experiment.order"), "{err}");
}

#[test]
fn unknown_key_and_bad_thread_count_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo", "[domain]\nkind = ball\nradus = 2\n\n[experiment]\nkind = robin\n");
    let out = robinfield(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("domain.radus"));

    let cfg = write_config(dir.path(), "ok", "[domain]\nkind = ball\n\n[experiment]\nkind = robin\nsamples = 1\n");
    assert_eq!(robinfield(&["run", &cfg], Some("zero")).status.code(), Some(2));
}

#[test]
fn ball_only_kinds_reject_other_domains() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hyp", "[domain]\nkind = ellipsoid\na = 1, 2\n\n[experiment]\nkind = hyperbolicity\n");
    assert_eq!(robinfield(&["run", &cfg], None).status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dist",
        "[domain]\nkind = ball\n\n[experiment]\nkind = distance\np = 0, 0\nq = 0.5, 0\nschedule = 4\nexpected = 2.0\n",
    );
    let out = robinfield(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(dir.path(), "dist")["status"], "fail");
}

#[test]
fn validate_writes_residual_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "val", "seed = 3\n[domain]\nkind = ball\nn = 2\n\n[experiment]\nkind = robin\n");
    let out = robinfield(&["validate", &cfg], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("val/val_residuals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pole,p_re1,p_re2,p_im1,p_im2,max_boundary,relative,max_laplacian,flagged"));
    assert_eq!(lines.count(), 3);
    let s = summary(dir.path(), "val");
    assert_eq!(s["kind"], "validate");
    assert!(s["values"]["max_relative_residual"].as_f64().unwrap() < 1e-4);
}

#[test]
fn closed_form_ball_jets_have_headers_and_exact_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "jets", "[domain]\nkind = ball\n\n[experiment]\nkind = robin\npoints = 0.3, 0; 0, 0.4i\norder = 1\n");
    assert!(robinfield(&["run", &cfg], None).status.success());
    let csv = std::fs::read_to_string(dir.path().join("jets/jets_jet_1.csv")).unwrap();
    assert!(csv.starts_with("multi_index_A,multi_index_B,re,im,err_est\n"));
    let lambda = summary(dir.path(), "jets")["values"]["lambda_1"].as_f64().unwrap();
    assert!((lambda + 1.0 / (1.0f64 - 0.09).powi(2)).abs() < 1e-12);
}

#[test]
fn numerical_output_is_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = "seed = 5\n[domain]\nkind = ellipsoid\na = 1, 2\n\n[solver]\nm_boundary = 600\nm_charges = 300\n\n[experiment]\nkind = curvature\nsamples = 3\nradius = 0.4\ndirections = 2\n";
    let a = write_config(dir.path(), "a", body);
    assert!(robinfield(&["run", &a], Some("1")).status.success());
    let first = std::fs::read(dir.path().join("a/a_curvature.csv")).unwrap();
    assert!(robinfield(&["run", &a], Some("2")).status.success());
    let second = std::fs::read(dir.path().join("a/a_curvature.csv")).unwrap();
    assert_eq!(first, second);
    let header = String::from_utf8(first).unwrap();
    assert!(header.starts_with("z_re1,z_re2,z_im1,z_im2,v_re1,v_re2,v_im1,v_im2,r\n"));
}

#[test]
fn ellipsoid_curvature_limit_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "thm16",
        "[domain]\nkind = ellipsoid\na = 1, 2\n\n[experiment]\nkind = asymptotics\ntable = thm16\nz0 = 1, 0\ntolerance = 0.05\n",
    );
    let out = robinfield(&["run", &cfg], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "thm16");
    let limit = s["values"]["limit_re"].as_f64().unwrap();
    assert!((limit + 1.0).abs() < 0.05, "{limit}");
    let table = std::fs::read_to_string(dir.path().join("thm16/thm16_summary.csv")).unwrap();
    assert!(table.starts_with("id,limit_re,limit_im,predicted_re,predicted_im,gap,order,spread,tolerance,pass\n"));
    assert!(dir.path().join("thm16/thm16_plot.py").exists());
}
