use serde_json::{json, Value};
use std::path::Path;
use std::process::Command;

fn triangle() -> Value {
    json!({"p": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0], [0, 2, 1.0]], "m2": 1.0})
}

fn glued(n1: usize) -> Value {
    let gluing: Vec<Value> = ["funnel", "cusp"]
        .iter()
        .flat_map(|s| (0..3).map(move |k| json!({"side": s, "level": 0, "fiber": k, "compact": 0, "weight": 1.0})))
        .collect();
    json!({"kind": "glued", "ray_length": n1, "fiber": triangle(), "compact_part": {"graph": {"p": 1}, "gluing": gluing}})
}

fn run(dir: &Path, config: &Value, extra: &[&str]) -> (i32, String) {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(config).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cusplab"))
        .arg("run")
        .arg(&path)
        .arg("--output")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn csv_lines(dir: &Path, name: &str) -> Vec<String> {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap().lines().map(String::from).collect()
}

#[test]
fn build_glued_reports_counts() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = run(d.path(), &json!({"geometry": glued(20), "command": "build"}), &[]);
    assert_eq!(code, 0);
    let r = report(d.path());
    assert_eq!(r["results"]["vertex_count"], 2 * 60 + 1);
    assert_eq!(r["results"]["edge_count"], 2 * (3 * 20 + 3 * 19) + 6);
    assert_eq!(r["command"], "build");
    assert_eq!(r["tool"], "cusplab");
    for v in r["verdicts"].as_array().unwrap() {
        assert!(r["tolerances"].get(v["name"].as_str().unwrap()).is_some());
    }
}

#[test]
fn halfline_commutator_check_passes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": {"kind": "half_ray_cusp", "ray_length": 50}, "command": "commutator-check", "command_params": {"target": "halfline"}});
    let (code, _) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 0);
    assert!(report(d.path())["results"]["max_interior_deviation"].as_f64().unwrap() < 1e-12);
}

#[test]
fn mourre_out_of_band_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(20), "command": "mourre-scan", "command_params": {"window": [5.0, 6.0], "truncations": [20, 30]}});
    let (code, _) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 2);
    let r = report(d.path());
    let v = r["verdicts"].as_array().unwrap().iter().find(|v| v["name"] == "window_in_band").unwrap().clone();
    assert_eq!(v["pass"], false);
    assert!(v["detail"].as_str().unwrap().contains("band"));
    assert!(r["results"]["out_of_band"].as_bool().unwrap());
}

#[test]
fn spectrum_writes_ascending_eigenvalues() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": {"kind": "half_ray_cusp", "ray_length": 40, "fiber": triangle()}, "command": "spectrum"});
    let (code, _) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 0);
    let lines = csv_lines(d.path(), "eigenvalues.csv");
    assert_eq!(lines[0], "index,eigenvalue");
    let ev: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    assert!(lines[1].split(',').nth(1).unwrap().contains('e'));
}

#[test]
fn lap_scan_schema_and_resolvent_bound() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(16), "command": "lap-scan",
        "command_params": {"lambdas": [-1.0], "rhos": [0.1, 0.01], "truncations": [16, 32, 64]}});
    let (code, err) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 0, "{err}");
    let lines = csv_lines(d.path(), "lap_norms.csv");
    assert_eq!(lines[0], "lambda,rho,N1_used,norm,verdict");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert!(f[3].parse::<f64>().unwrap() <= 1.0 + 1e-12);
        assert_eq!(f[4], "plateau");
    }
    let m = csv_lines(d.path(), "lap_matrix.csv");
    assert_eq!(m.len(), 2);
    assert!(m[0].starts_with("lambda,rho=1.0000000000000001e-1,rho="));
}

#[test]
fn threshold_study_counts_schema() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(20), "command": "threshold-study", "command_params": {"window": [1.0, 3.0], "truncations": [20, 40]}});
    let (code, _) = run(d.path(), &cfg, &[]);
    assert!(code == 0 || code == 2);
    let lines = csv_lines(d.path(), "counts.csv");
    assert_eq!(lines[0], "N1,interior_count,near_alpha_count,near_beta_count");
    assert_eq!(lines.len(), 3);
}

#[test]
fn evolve_and_conditions_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(20), "command": "evolve", "command_params": {"window": [1.0, 3.0], "horizon": 5.0, "truncations": [20, 40]}});
    let (code, err) = run(d.path(), &cfg, &[]);
    assert!(code == 0 || code == 2, "{err}");
    let r = report(d.path());
    let u = r["verdicts"].as_array().unwrap().iter().find(|v| v["name"] == "unitarity").unwrap().clone();
    assert_eq!(u["pass"], true);

    let e = tempfile::tempdir().unwrap();
    let pert = json!({"V": {"family": "fiber_linear", "slope": 1.0}});
    let cfg = json!({"geometry": glued(30), "perturbation": pert, "command": "conditions-check"});
    let (code, _) = run(e.path(), &cfg, &[]);
    assert_eq!(code, 2);
    let r = report(e.path());
    assert_eq!(r["config_echo"]["command_params"]["eps_exponent"], 0.5);
}

#[test]
fn schema_errors_exit_one_and_name_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(20), "command": "mourre-scan", "command_params": {"window": [1.0, 3.0], "trunc": [20]}});
    let (code, err) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("trunc"), "{err}");
    let cfg = json!({"geometry": glued(20), "command": "lap-scan", "command_params": {"lambdas": [2.0], "rhos": [0.01, 0.1]}});
    let (code, err) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("rhos"), "{err}");
    let cfg = json!({"geometry": {"kind": "half_ray_cusp"}, "command": "build"});
    let (code, err) = run(d.path(), &cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("ray_length"), "{err}");
}

#[test]
fn dimension_cap_exits_one_with_hint() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(20), "command": "threshold-study", "command_params": {"window": [1.0, 3.0], "truncations": [20, 40]}});
    let (code, err) = run(d.path(), &cfg, &["--max-dim", "50"]);
    assert_eq!(code, 1);
    assert!(err.contains("max-dim"), "{err}");
}

#[test]
fn reports_are_reproducible_apart_from_timestamp() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({"geometry": glued(16), "command": "lap-scan",
        "command_params": {"lambdas": [2.0], "rhos": [0.1, 0.05], "truncations": [16, 32]}});
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timestamp");
        serde_json::to_string(&v).unwrap()
    };
    run(d.path(), &cfg, &["--seed", "11"]);
    let first = strip(report(d.path()));
    let csv1 = csv_lines(d.path(), "lap_norms.csv");
    run(d.path(), &cfg, &["--seed", "11"]);
    assert_eq!(first, strip(report(d.path())));
    assert_eq!(csv1, csv_lines(d.path(), "lap_norms.csv"));
    let echo = report(d.path())["config_echo"].clone();
    assert_eq!(echo["seed"], 11);
    assert_eq!(echo["command_params"]["s"], 1.0);
    assert_eq!(echo["command_params"]["basis"], "sector");
    assert_eq!(echo["max_dim"], 6000);
}
