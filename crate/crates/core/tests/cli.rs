//! End-to-end checks of the `fieldamort` binary: subcommand plumbing, file
//! outputs, and the exit-code contract (0 ok, 2 usage/config, 3 I/O,
//! 4 numeric).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fieldamort"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn fieldamort")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen_small(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "gen-data",
        "--out",
        out,
        "--collections",
        "12",
        "--seed",
        "5",
    ];
    args.extend_from_slice(extra);
    assert_exit(&run(&args), 0);
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen_small(&a, &[]);
    gen_small(&b, &[]);
    assert_eq!(
        fs::read(a.join("labels.f64")).unwrap(),
        fs::read(b.join("labels.f64")).unwrap()
    );
    assert!(a.join("meta.json").exists());
    assert!(a.join("sources.f64").exists());
    assert!(a.join("points.f64").exists());
}

#[test]
fn train_eval_roundtrip_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    gen_small(&ds, &[]);
    let ckpt = tmp.path().join("ckpt");
    assert_exit(
        &run(&[
            "train",
            "--kind",
            "linear",
            "--data",
            ds.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--epochs-per-stage",
            "5",
        ]),
        0,
    );
    assert!(ckpt.join("meta.json").exists());
    assert!(ckpt.join("params.f64").exists());
    assert!(ckpt.join("report.json").exists());

    let metrics = tmp.path().join("metrics.json");
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        ds.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let parsed: serde_json::Value =
        serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    assert!(parsed["delta_phi"].as_f64().unwrap() > 0.0);
    assert_eq!(parsed["kind"], "linear");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    // unknown model kind
    let out = run(&[
        "train",
        "--kind",
        "spline",
        "--data",
        "x",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);

    // malformed config file gets a field-level message
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{ "n_collections": "twelve" }"#).unwrap();
    let out = run(&[
        "gen-data",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("ds").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_collections"));
}

#[test]
fn missing_dataset_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--kind",
        "fourier",
        "--data",
        tmp.path().join("nope").to_str().unwrap(),
        "--out",
        tmp.path().join("ckpt").to_str().unwrap(),
    ]);
    assert_exit(&out, 3);
}

#[test]
fn fcinr_multi_source_eval_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let single = tmp.path().join("single");
    let multi = tmp.path().join("multi");
    gen_small(&single, &[]);
    gen_small(&multi, &["--multi-source"]);
    let ckpt = tmp.path().join("ckpt");
    assert_exit(
        &run(&[
            "train",
            "--kind",
            "fcinr",
            "--data",
            single.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--epochs-per-stage",
            "2",
        ]),
        0,
    );
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        multi.to_str().unwrap(),
        "--multi-source",
    ]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("superpose"));
}

#[test]
fn demo_1d_and_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("ckpt1d");
    assert_exit(
        &run(&[
            "train",
            "--kind",
            "fourier1d",
            "--out",
            ckpt.to_str().unwrap(),
            "--epochs-per-stage",
            "3",
        ]),
        0,
    );
    let csv = tmp.path().join("demo.csv");
    assert_exit(
        &run(&[
            "demo-1d",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--sources",
            "6",
            "--out",
            csv.to_str().unwrap(),
        ]),
        0,
    );
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,phi_true,phi_model\n"));
    assert_eq!(text.lines().count(), 513);

    let out = run(&[
        "demo-1d",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--sources",
        "0",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn dump_field_writes_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    gen_small(&ds, &[]);
    let ckpt = tmp.path().join("ckpt");
    assert_exit(
        &run(&[
            "train",
            "--kind",
            "linear",
            "--data",
            ds.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--epochs-per-stage",
            "2",
        ]),
        0,
    );
    let col = tmp.path().join("collection.json");
    fs::write(
        &col,
        r#"{
          "sources": [
            { "position": [0.0, 0.0], "moment": [0.0, 1.0], "radius": 1.0 },
            { "position": [1.5, -1.0], "moment": [1.0, 0.0], "radius": 1.0 }
          ],
          "domain": { "lo": [-3.0, -3.0], "hi": [3.0, 3.0] }
        }"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("grids");
    assert_exit(
        &run(&[
            "dump-field",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--collection",
            col.to_str().unwrap(),
            "--grid",
            "16",
            "--out",
            out_dir.to_str().unwrap(),
        ]),
        0,
    );
    for name in [
        "truth_potential.csv",
        "model_potential.csv",
        "truth_field.csv",
        "model_field.csv",
        "truth_potential.pgm",
        "model_potential.pgm",
        "truth_field.pgm",
        "model_field.pgm",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let pgm = fs::read(out_dir.join("truth_potential.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), "P5\n16 16\n255\n".len() + 16 * 16);
    let csv = fs::read_to_string(out_dir.join("truth_field.csv")).unwrap();
    assert!(csv.starts_with("x,y,hx,hy\n"));
    assert_eq!(csv.lines().count(), 1 + 16 * 16);
}

#[test]
fn bench_small_sweep_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("bench");
    let out = run(&[
        "bench",
        "--sizes",
        "16,32,64,128",
        "--repeats",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("m_points,n_sources,exact_time,amortized_time,exact_ops,amortized_ops\n"));
    assert_eq!(csv.lines().count(), 1 + 16);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 16);
    assert!(out_dir.join("crossover.json").exists());
}
