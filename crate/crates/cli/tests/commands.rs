use std::path::Path;
use std::process::{Command, Output};

fn twinmeter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinmeter"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn reproduce_table_formats() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&twinmeter(&["reproduce-table", "--table", "1"], dir.path()));
    assert!(text.lines().nth(4).unwrap().contains("86.34"), "{text}");

    let csv = ok(&twinmeter(&["reproduce-table", "--table", "3", "--format", "csv"], dir.path()));
    let soda = csv.lines().find(|l| l.starts_with("2,Soda Lam")).unwrap();
    assert!(soda.contains(",93.6021,93.6100,-0.0079,"), "{soda}");

    let json = ok(&twinmeter(&["estimate", "--paper-table", "2"], dir.path()));
    let rows: serde_json::Value = serde_json::from_str(&json).unwrap();
    let tsc = rows[1]["t_sc"]["mean"].as_f64().unwrap();
    assert!((tsc - 3.45).abs() < 0.005);

    let by_label = ok(&twinmeter(
        &["reproduce-table", "--table", "1", "--reference-label", "R", "--format", "json"],
        dir.path(),
    ));
    let rows: serde_json::Value = serde_json::from_str(&by_label).unwrap();
    assert_eq!(rows[1]["is_reference"], true);

    let bad = twinmeter(&["reproduce-table", "--table", "4"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    let missing = twinmeter(&["reproduce-table", "--table", "1", "--data-dir", "nowhere"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn pm_curve_single_wavelength_and_failure_code() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["pm-curve", "--lambda-min-nm", "810", "--lambda-max-nm", "810", "--steps", "1"];
    let csv = ok(&twinmeter(&args, dir.path()));
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert!((row[2] - 3.0).abs() <= 0.5, "{csv}");
    assert_eq!(row[2], row[3]);
    assert!(row[4].abs() < 1e-10);

    let mut none = args.to_vec();
    none.extend(["--cut-angle-deg", "20"]);
    assert_eq!(twinmeter(&none, dir.path()).status.code(), Some(3));

    let mut unknown = args.to_vec();
    unknown.extend(["--root-finder", "newton"]);
    let out = twinmeter(&unknown, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bisection"));
}

#[test]
fn simulate_count_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--gate-s", "0.01", "--n-gates", "4", "--seed", "5"];
    let mut reference = vec!["simulate", "-o", "ref.csv"];
    reference.extend(common);
    ok(&twinmeter(&reference, dir.path()));
    let mut sample = vec!["simulate", "-o", "sample.csv", "--first-gate", "4", "--transmittance-pct", "60"];
    sample.extend(common);
    ok(&twinmeter(&sample, dir.path()));

    for (input, output) in [("ref.csv", "ref_counts.csv"), ("sample.csv", "sample_counts.csv")] {
        ok(&twinmeter(&["count", "-i", input, "--gate-s", "0.01", "-o", output], dir.path()));
    }
    let counts = std::fs::read_to_string(dir.path().join("sample_counts.csv")).unwrap();
    assert_eq!(counts.lines().count(), 6);
    assert!(counts.lines().last().unwrap().starts_with("mean,"));

    let g2 = ok(&twinmeter(
        &["g2", "-i", "ref.csv", "--gate-s", "0.01", "--bin-ns", "1", "--range-ns", "21"],
        dir.path(),
    ));
    let peak: f64 = g2.lines().nth(11).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(peak > 10.0, "{g2}");

    let report = ok(&twinmeter(
        &[
            "estimate", "--reference", "ref_counts.csv", "--sample", "sample_counts.csv", "--gate-s", "0.01",
            "--dark1-cps", "351", "--dark2-cps", "483", "--tau-dead-ns", "50", "--spread", "standard-error",
        ],
        dir.path(),
    ));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    let t = v["t_cc"]["mean"].as_f64().unwrap();
    let u = v["t_cc"]["uncertainty"].as_f64().unwrap();
    assert!((t - 60.0).abs() < 4.0 * u, "{t} ± {u}");
}

#[test]
fn fit_then_concentration() {
    let dir = tempfile::tempdir().unwrap();
    let model = |c: f64| 20.0 * (-c / 2.0).exp() + 70.0 * (-c / 500.0).exp();
    let mut csv = String::from("concentration_ng_ul,transmittance_pct,dT_pct\n");
    for k in 0..8 {
        let c = 0.05 * 10f64.powf(k as f64 * 0.65);
        csv.push_str(&format!("{c},{},0.05\n", model(c)));
    }
    std::fs::write(dir.path().join("points.csv"), csv).unwrap();
    ok(&twinmeter(&["fit", "-i", "points.csv", "-o", "model.json"], dir.path()));
    let fitted: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(fitted["converged"], true);

    let t = format!("{}", model(3.0));
    let out = twinmeter(&["concentration", "--model", "model.json", "--t", &t, "--dt", "0.01"], dir.path());
    let printed = ok(&out);
    let c: f64 = printed.split_whitespace().next().unwrap().parse().unwrap();
    assert!((c / 3.0 - 1.0).abs() < 1e-6, "{printed}");

    let beyond = twinmeter(&["concentration", "--model", "model.json", "--t", "99"], dir.path());
    assert_eq!(beyond.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&beyond.stderr).contains("attainable"));

    std::fs::write(dir.path().join("three.csv"), "concentration_ng_ul,transmittance_pct,dT_pct\n1,2,\n2,1,\n3,0.5,\n").unwrap();
    assert_eq!(twinmeter(&["fit", "-i", "three.csv"], dir.path()).status.code(), Some(2));
}

const SMALL_RUN: &str = r#"
[source]
pair_rate = 4.43e6
eta1 = 0.28
eta2 = 0.0864
dark1 = 351.0
dark2 = 483.0
jitter_sigma_ps = 600.0
dead_time_ns = 50.0
gate_s = 0.01
n_gates = 4
seed = 1

[sample]
true_transmittance = 0.9

[output]
report = "out/report.json"
sample_counts = "out/sample.csv"
"#;

#[test]
fn run_is_deterministic_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    ok(&twinmeter(&["run", "--config", "run.toml"], dir.path()));
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert!(dir.path().join("out/sample.csv").exists());
    ok(&twinmeter(&["run", "--config", "run.toml"], dir.path()));
    assert_eq!(first, std::fs::read(dir.path().join("out/report.json")).unwrap());

    ok(&twinmeter(&["run", "--config", "run.toml", "--seed", "2", "--report", "other.json"], dir.path()));
    let other: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("other.json")).unwrap()).unwrap();
    assert_eq!(other["seed"], 2);

    std::fs::write(dir.path().join("bad.toml"), SMALL_RUN.replace("n_gates = 4", "n_gates = 1")).unwrap();
    assert_eq!(twinmeter(&["run", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
}
