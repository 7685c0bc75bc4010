use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn bpoe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpoe"))
        .args(args)
        .env_remove("BPOE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_str(&stdout(out)).expect("valid JSON")
}

fn scenario_file(text: &str, suffix: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

const EXAMPLE1: &str = "prob,b,a1\n0.5,-1,0\n0.5,-1,1\n";

#[test]
fn eval_example1_keys_in_order() {
    let f = scenario_file(EXAMPLE1, ".csv");
    let out = bpoe(&[
        "eval",
        "--scenarios",
        f.path().to_str().unwrap(),
        "--x",
        "1.5",
    ]);
    let text = stdout(&out);
    assert!(
        text.starts_with(r#"{"bpoe":0.75,"alpha_bar":0.25,"gamma":[1.0,1.0],"regime":"interior""#),
        "{text}"
    );
    let v = json(&out);
    assert_eq!(v["bpoe"], 0.75);

    let out = bpoe(&[
        "eval",
        "--scenarios",
        f.path().to_str().unwrap(),
        "--x",
        "1.5",
        "--method",
        "definitional",
    ]);
    assert!((json(&out)["bpoe"].as_f64().unwrap() - 0.75).abs() < 1e-9);
}

#[test]
fn eval_all_negative() {
    let f = scenario_file("prob,b,a1\n0.5,-1,0\n0.5,-2,0\n", ".csv");
    let out = bpoe(&[
        "eval",
        "--scenarios",
        f.path().to_str().unwrap(),
        "--x",
        "0",
    ]);
    assert_eq!(stdout(&out).trim(), r#"{"bpoe":0.0,"regime":"zero"}"#);
}

#[test]
fn eval_json_input() {
    let f = scenario_file(
        r#"{"scenarios":[{"prob":0.5,"b":-1,"a":[0]},{"prob":0.5,"b":-1,"a":[1]}]}"#,
        ".json",
    );
    let v = json(&bpoe(&[
        "eval",
        "--scenarios",
        f.path().to_str().unwrap(),
        "--x",
        "1.5",
    ]));
    assert_eq!(v["bpoe"], 0.75);
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(
        bpoe(&["eval", "--scenarios", "/nonexistent/file.csv", "--x", "1"])
            .status
            .code(),
        Some(2)
    );
    let bad = scenario_file("prob,b,a1\n0.5,-1\n", ".csv");
    let out = bpoe(&[
        "eval",
        "--scenarios",
        bad.path().to_str().unwrap(),
        "--x",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    let f = scenario_file(EXAMPLE1, ".csv");
    assert_eq!(
        bpoe(&[
            "eval",
            "--scenarios",
            f.path().to_str().unwrap(),
            "--x",
            "a"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        bpoe(&[
            "eval",
            "--scenarios",
            f.path().to_str().unwrap(),
            "--x",
            "1,2"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(bpoe(&["eval", "--x", "1"]).status.code(), Some(2));
    assert_eq!(
        bpoe(&["eval", "--model", "example2", "--x", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn regime_errors_exit_3() {
    let out = bpoe(&["subgrad", "--model", "network", "--x", "0.1"]);
    assert_eq!(out.status.code(), Some(3));
    let out = bpoe(&[
        "check", "--model", "network", "--x", "0.1", "--lower", "0", "--upper", "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn subgrad_outputs() {
    let x_hat = (1.0 - 0.9f64.powi(4)) / (2.0 * 0.9f64.powi(3) * 0.1);
    let v = json(&bpoe(&[
        "subgrad",
        "--model",
        "network",
        "--rho",
        "0.1",
        "--x",
        &x_hat.to_string(),
    ]));
    let b = &v["bounds"][0];
    assert!((b[0].as_f64().unwrap() + 0.1073).abs() < 1e-3);
    assert!((b[1].as_f64().unwrap() + 0.0392).abs() < 1e-3);
    assert_eq!(v["closed_form"], "not applicable");
    assert!(v["singleton"].is_null());

    let v = json(&bpoe(&["subgrad", "--model", "example1", "--x", "1.5"]));
    assert_eq!(v["singleton"][0], 0.5);
    assert_eq!(v["closed_form"][0], 0.5);

    let f = scenario_file("prob,b,a1\n0.5,-1,0\n0.5,0.5,0\n", ".csv");
    let v = json(&bpoe(&[
        "subgrad",
        "--scenarios",
        f.path().to_str().unwrap(),
        "--x",
        "0",
    ]));
    assert_eq!(v["singleton"][0], 0.0);
}

fn sweep_rows(text: &str) -> Vec<(f64, f64, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,bpoe,failure_prob"));
    lines
        .map(|l| {
            let c: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(c.len(), 3);
            (c[0], c[1], c[2])
        })
        .collect()
}

#[test]
fn sweep_kink_location() {
    let out = bpoe(&[
        "sweep", "--model", "network", "--rho", "0.1", "--x-min", "2", "--x-max", "4", "--steps",
        "201",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = sweep_rows(&stdout(&out));
    assert_eq!(rows.len(), 201);
    let (k, _) = rows
        .windows(3)
        .enumerate()
        .map(|(k, w)| (k + 1, (w[2].1 - 2.0 * w[1].1 + w[0].1).abs()))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let step = 2.0 / 200.0;
    assert!((rows[k].0 - 2.3587).abs() <= step, "kink at {}", rows[k].0);
}

#[test]
fn sweep_edges() {
    let out = bpoe(&[
        "sweep", "--model", "network", "--x-min", "2", "--x-max", "4", "--steps", "2",
    ]);
    let rows = sweep_rows(&stdout(&out));
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![2.0, 4.0]);
    let out = bpoe(&[
        "sweep", "--model", "network", "--x-min", "4", "--x-max", "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_and_check() {
    let v = json(&bpoe(&[
        "optimize", "--model", "network", "--x0", "2.5", "--lower", "2.5", "--upper", "5",
        "--step0", "20",
    ]));
    assert!((v["x_final"][0].as_f64().unwrap() - 5.0).abs() < 1e-3);
    assert_eq!(
        v["iterations"].as_u64().unwrap() as usize,
        v["trace"].as_array().unwrap().len()
    );

    let v = json(&bpoe(&[
        "check", "--model", "network", "--x", "5", "--lower", "2.5", "--upper", "5",
    ]));
    assert_eq!(v["stationary"], true);
    let v = json(&bpoe(&[
        "check", "--model", "network", "--x", "3", "--lower", "2.5", "--upper", "5",
    ]));
    assert_eq!(v["stationary"], false);
    let v = json(&bpoe(&[
        "check", "--model", "example1", "--x", "1.2", "--lower", "-inf", "--upper", "inf",
    ]));
    assert_eq!(v["stationary"], false);
    let out = bpoe(&[
        "check", "--model", "example1", "--x", "1.2", "--lower", "2", "--upper", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grad_mc_is_thread_independent() {
    let args = [
        "grad-mc",
        "--model",
        "example2",
        "--x",
        "2",
        "--n-samples",
        "20000",
        "--seed",
        "3",
    ];
    let one = stdout(&bpoe(&[&["--threads", "1"], &args[..]].concat()));
    let many = stdout(&bpoe(&[&["--threads", "3"], &args[..]].concat()));
    assert_eq!(one, many);
    let v: Value = serde_json::from_str(&one).unwrap();
    assert!((v["mean"][0].as_f64().unwrap() - 0.25).abs() < 0.02);

    let v = json(&bpoe(&[
        "grad-mc",
        "--model",
        "example1",
        "--x",
        "1.5",
        "--n-samples",
        "20000",
    ]));
    assert!(v["mean"][0].as_f64().is_some());
}

#[test]
fn threads_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_bpoe"))
        .args(["eval", "--model", "example1", "--x", "1.5"])
        .env("BPOE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(json(&out)["bpoe"], 0.75);
}

#[test]
fn repro_examples() {
    for ex in ["example1", "example3"] {
        let out = bpoe(&["repro", ex]);
        assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
        let text = stdout(&out);
        assert!(text.starts_with("check,expected,computed,tolerance,status\n"));
        assert!(text.lines().skip(1).all(|l| l.ends_with(",PASS")));
    }
    let text = stdout(&bpoe(&["repro", "example1"]));
    assert!(text.contains("example1 bpoe min-formula,0.75,0.75,"));
}
