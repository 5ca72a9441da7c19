use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn curvlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn identities_pass_with_defaults() {
    let out = curvlab(&["identities", "--n", "5", "--samples", "20"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).ends_with("PASS\n"));
}

#[test]
fn impossible_tolerance_exits_two_and_names_the_case() {
    let out = curvlab(&["identities", "--n", "5", "--samples", "5", "--tol", "1e-20"]);
    assert_eq!(code(&out), 2);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAILED") && stdout.contains("seed 0"));
}

#[test]
fn bad_configuration_exits_three() {
    assert_eq!(code(&curvlab(&["identities", "--n", "3"])), 3);
    assert_eq!(
        code(&curvlab(&["invariance", "--sigma", "2.5", "--seed", "1"])),
        3
    );
    assert_eq!(
        code(&curvlab(&["invariance"])),
        3,
        "randomized runs need a seed"
    );
    assert_eq!(code(&curvlab(&["surgery", "--profile", "wobbly"])), 3);
    assert_eq!(code(&curvlab(&["catalog", "cp", "--n", "5"])), 3);
}

#[test]
fn commands_without_csv_refuse_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let out = curvlab(&[
        "identities",
        "--n",
        "4",
        "--samples",
        "2",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn json_report_is_versioned_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let args = [
            "transversality",
            "--n",
            "5",
            "--seed",
            "7",
            "--samples",
            "3",
            "--json",
            path.to_str().unwrap(),
        ];
        assert_eq!(code(&curvlab(&args)), 0);
    }
    let first = read_json(&a);
    assert_eq!(first["schema_version"], 1);
    assert_eq!(first["command"], "transversality");
    assert_eq!(first["config"]["seed"], 7);
    assert_eq!(first["pass"], true);
    assert_eq!(without_timestamp(first), without_timestamp(read_json(&b)));
}

#[test]
fn saved_tensor_round_trips_through_membership() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = dir.path().join("r.json");
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let t = tensor.to_str().unwrap();
    let out = curvlab(&[
        "membership",
        "--n",
        "6",
        "--random",
        "member",
        "--seed",
        "4",
        "--sigma",
        "1.5",
        "--theta",
        "0.05",
        "--save",
        t,
        "--json",
        first.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = curvlab(&[
        "membership",
        "--n",
        "6",
        "--input",
        t,
        "--seed",
        "4",
        "--sigma",
        "1.5",
        "--theta",
        "0.05",
        "--json",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (first, second) = (read_json(&first), read_json(&second));
    assert_eq!(
        first["report"]["membership"],
        second["report"]["membership"]
    );
    assert_eq!(first["report"]["membership"]["member"], true);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let report = dir.path().join("out.json");
    std::fs::write(&config, "n = 7\nsigma = 1.25\nseed = 11\n").unwrap();
    let args = [
        "catalog",
        "sphere",
        "--config",
        config.to_str().unwrap(),
        "--sigma",
        "1.5",
        "--json",
        report.to_str().unwrap(),
    ];
    assert_eq!(code(&curvlab(&args)), 0);
    let v = read_json(&report);
    assert_eq!(v["config"]["n"], 7);
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["config"]["sigma"], 1.5);

    std::fs::write(&config, "dimension = 7\n").unwrap();
    assert_eq!(
        code(&curvlab(&[
            "catalog",
            "sphere",
            "--config",
            config.to_str().unwrap()
        ])),
        3
    );
}

#[test]
fn cylinder_is_interior_to_the_pic2_cone() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("cyl.json");
    let csv = dir.path().join("cyl.csv");
    let args = [
        "catalog",
        "cylinder",
        "--n",
        "6",
        "--sigma",
        "2",
        "--theta",
        "0",
        "--json",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ];
    let out = curvlab(&args);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Interior"));
    let v = read_json(&report);
    assert_eq!(
        v["report"]["records"][0]["audit"]["classification"],
        "interior"
    );
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert!(rows.lines().nth(1).unwrap().starts_with("cylinder,6,"));
}

#[test]
fn theta_bar_matches_closed_form() {
    let out = curvlab(&["theta-bar", "--n", "6", "--samples", "500"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("theta_hat(6) = 0.16666666"), "{stdout}");
}

#[test]
fn pinching_function_built_then_evaluated_from_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("f.json");
    let r = report.to_str().unwrap();
    assert_eq!(
        code(&curvlab(&[
            "pinching", "build", "--n", "5", "--depth", "8", "--json", r
        ])),
        0
    );
    let out = curvlab(&["pinching", "eval", "--input", r, "--at", "0,2,50"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("f(0.0) = 0.0\n"), "{stdout}");
    assert_eq!(
        code(&curvlab(&["pinching", "eval", "--input", r, "--at=-1"])),
        3
    );
    assert_eq!(
        code(&curvlab(&["pinching", "eval", "--input", r])),
        3,
        "usage errors share the config code"
    );
}

#[test]
fn catalog_matches_stored_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    for n in ["5", "6"] {
        let csv = dir.path().join("catalog.csv");
        assert_eq!(
            code(&curvlab(&[
                "catalog",
                "--n",
                n,
                "--csv",
                csv.to_str().unwrap()
            ])),
            0
        );
        let fixture = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join(format!("tests/fixtures/v1/catalog_n{n}.csv"));
        let want = std::fs::read_to_string(fixture).unwrap();
        let got = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(got.lines().count(), want.lines().count());
        for (g, w) in got.lines().zip(want.lines()).skip(1) {
            let (g, w): (Vec<_>, Vec<_>) = (g.split(',').collect(), w.split(',').collect());
            assert_eq!((g[0], g[1], g[3]), (w[0], w[1], w[3]), "n = {n}");
            let (gs, ws): (f64, f64) = (g[2].parse().unwrap(), w[2].parse().unwrap());
            assert!((gs - ws).abs() <= 1e-9, "{}: slack {gs} vs {ws}", g[0]);
            assert_eq!(g[4] == "0", w[4] == "0", "{}: exiting directions", g[0]);
        }
    }
}

#[test]
fn perturbed_neck_audit_matches_stored_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("surgery.json");
    let out = curvlab(&[
        "surgery",
        "--profile",
        "cosine:0.01",
        "--json",
        report.to_str().unwrap(),
    ]);
    let got = read_json(&report);
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/v1/surgery_cosine_0.01.json");
    let want = read_json(&fixture);
    for (key, value) in want.as_object().unwrap() {
        assert_eq!(&got["report"][key], value, "{key}");
    }
    assert_eq!(code(&out), if want["pass"] == true { 0 } else { 2 });
}
