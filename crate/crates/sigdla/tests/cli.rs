//! End-to-end tests of the `sigdla` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sigdla_core::isa::assemble;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn sigdla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigdla"))
        .args(args)
        .env("SIGDLA_FIXTURES", fixtures())
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn assemble_disassemble_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("gather-pad.bin");
    let src = fixtures().join("gather-pad.asm");
    assert!(sigdla(&["assemble", path(&src), "-o", path(&bin)]).status.success());
    let text = sigdla(&["disassemble", path(&bin)]);
    assert!(text.status.success());
    let original = assemble(&fs::read_to_string(&src).unwrap()).unwrap();
    let back = assemble(&stdout(&text)).unwrap();
    assert_eq!(back, original);
    assert_eq!(original.control_sequence_len(), 7);
}

#[test]
fn malformed_assembly_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.asm");
    fs::write(&bad, "halt\nctrl-shuffling unit=99 sel=0 split=0 finish=0\n").unwrap();
    let o = sigdla(&["assemble", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn run_writes_outputs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = sigdla(&[
        "run",
        "--workload",
        "fir.json",
        "--input",
        "fir-x.csv",
        "--out",
        path(&out),
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let y: Vec<i64> = fs::read_to_string(out.join("y.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(y.len(), 200);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("total_cycles,"));
    assert!(out.join("program.asm").exists() && out.join("plan.json").exists());
}

#[test]
fn run_without_output_prints_report() {
    let o = sigdla(&[
        "run",
        &fixtures().join("fft128-run.json").display().to_string(),
        "--out",
        "/dev/null/x",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = sigdla(&["run", "--workload", "fir.json", "--input", "fir-x.csv"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["total_cycles"].as_u64().unwrap() > 0);
}

#[test]
fn missing_files_are_usage_errors() {
    let o = sigdla(&[
        "run",
        "--workload",
        "fir.json",
        "--input",
        "fir-x.csv",
        "--machine",
        "nope.json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = sigdla(&["run", "--workload", "fir.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing input `x`"));
}

#[test]
fn seed_fills_missing_inputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let y = |seed: &str, tag: &str| {
        let out = dir.path().join(tag);
        let o = sigdla(&["run", "--workload", "conv.json", "--seed", seed, "--out", path(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("y.csv")).unwrap()
    };
    assert_eq!(y("5", "a"), y("5", "b"));
    assert_ne!(y("5", "a"), y("6", "c"));
}

#[test]
fn cycle_budget_fault_exits_3() {
    let o = sigdla(&[
        "run",
        "--workload",
        "fir.json",
        "--input",
        "fir-x.csv",
        "--cycle-budget",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn overlap_flag_never_adds_cycles() {
    let cycles = |extra: &[&str]| {
        let mut args = vec![
            "run",
            "--workload",
            "fir.json",
            "--input",
            "fir-x.csv",
            "--format",
            "json",
        ];
        args.extend(extra);
        let o = sigdla(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap()["total_cycles"]
            .as_u64()
            .unwrap()
    };
    assert!(cycles(&["--overlap-dma"]) <= cycles(&[]));
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let o = sigdla(&[
        "verify",
        "--workload",
        "fft128.json",
        "--input",
        "fft128-x.csv",
        "--cases",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
    let o = sigdla(&["verify", "--workload", "fir.json", "--cases", "3", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let o = sigdla(&["verify", "--workload", "fft128-bad-twiddle.json", "--cases", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

fn bench_rows(suite: &str) -> Vec<(String, String, f64)> {
    let o = sigdla(&["bench", suite, "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string(), f.last().unwrap().parse().unwrap())
        })
        .collect()
}

#[test]
fn cnn_suite_orders_configurations() {
    let rows = bench_rows("cnn-suite.json");
    for name in ["conv16", "conv32x8"] {
        let s = |cfg: &str| rows.iter().find(|r| r.0 == name && r.1 == cfg).unwrap().2;
        assert!(s("4x4") > s("8x8") && s("8x8") > s("16x16"));
        assert_eq!(s("16x16"), 1.0);
    }
}

#[test]
fn dsp_suite_fir_and_dct_near_four() {
    let rows = bench_rows("dsp-suite.json");
    for name in ["fir200x8", "dct64"] {
        let s = rows.iter().find(|r| r.0 == name && r.1 == "8x8").unwrap().2;
        assert!((3.5..=4.0).contains(&s), "{name}: {s}");
    }
}

#[test]
fn empty_suite_is_an_empty_table() {
    let o = sigdla(&["bench", "empty-suite.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
    let o = sigdla(&["bench", "empty-suite.json", "--format", "json"]);
    assert_eq!(stdout(&o).trim(), "[]");
}

#[test]
fn count_networks() {
    let o = sigdla(&["count", "--workload", "ultranet.json"]);
    assert_eq!(stdout(&o).trim(), "3843072");
}
