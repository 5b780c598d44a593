use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ial_core::experiment::{read_sweep_summary, SWEEP_SUMMARY_CSV};
use ial_core::io::{read_instance, read_json, read_trace, write_json, ReportFile, TraceSidecar, TRACE_JSON};
use tempfile::TempDir;

fn ial(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ial"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_run(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let g = ial(dir, &["generate", "simplex_ls", "12", "3", "4", "inst.json"]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let mut args = vec![
        "solve",
        "inst.json",
        "--outer-iters",
        "60",
        "--cold-start",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    ial(dir, &args)
}

#[test]
fn generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = ial(tmp.path(), &["generate", "simplex_ls", "2", "1", "7", "a.json"]);
    let b = ial(
        tmp.path(),
        &["generate", "simplex_ls", "2", "1", "--seed", "7", "--out", "b.json"],
    );
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        fs::read(tmp.path().join("a.json")).unwrap(),
        fs::read(tmp.path().join("b.json")).unwrap()
    );
}

#[test]
fn generated_instance_loads() {
    let tmp = TempDir::new().unwrap();
    let o = ial(tmp.path(), &["generate", "box_qp", "50", "10", "1", "inst.json"]);
    assert_eq!(code(&o), 0);
    let (p, hash) = read_instance(&tmp.path().join("inst.json")).unwrap();
    assert_eq!((p.n(), p.m()), (50, 10));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), hash);
}

#[test]
fn malformed_family_names_the_valid_ones() {
    let tmp = TempDir::new().unwrap();
    let o = ial(tmp.path(), &["generate", "simplex", "2", "1", "7", "x.json"]);
    assert_eq!(code(&o), 4);
    let err = stderr(&o);
    for f in ["simplex_ls", "box_qp", "l1_basis_pursuit"] {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn usage_errors_and_help() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&ial(tmp.path(), &["solve"])), 4);
    assert_eq!(code(&ial(tmp.path(), &["frobnicate"])), 4);
    assert_eq!(code(&ial(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&ial(tmp.path(), &["--version"])), 0);
    assert_eq!(code(&ial(tmp.path(), &["solve", "missing.json"])), 4);
    assert_eq!(
        code(&ial(tmp.path(), &["generate", "box_qp", "3", "2", "1", "i.json"])),
        0
    );
    assert_eq!(code(&ial(tmp.path(), &["solve", "i.json", "--inner", "newton"])), 4);
    assert_eq!(code(&ial(tmp.path(), &["solve", "i.json", "--alpha", "0.5"])), 4);
}

#[test]
fn solve_writes_a_compliant_reloadable_trace() {
    let tmp = TempDir::new().unwrap();
    let o = small_run(tmp.path(), "run", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (trace, sidecar) = read_trace(&tmp.path().join("run")).unwrap();
    assert_eq!(trace.len(), 60);
    assert!(trace.rows.iter().all(|r| r.gap <= r.eta));
    assert_eq!(sidecar.lambda_path.len(), 61);
    assert!(sidecar.aborted.is_none());
}

#[test]
fn identical_solves_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_run(tmp.path(), "a", &["--seed", "4"])), 0);
    assert_eq!(code(&small_run(tmp.path(), "b", &["--seed", "4"])), 0);
    for f in ["trace.csv", "trace.json", "instance.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn verify_passes_on_compliant_run() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_run(tmp.path(), "run", &[])), 0);
    let o = ial(tmp.path(), &["verify", "run"]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let reports = tmp.path().join("run/reports");
    let mut count = 0;
    for entry in fs::read_dir(&reports).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let r: ReportFile = read_json(&path).unwrap();
            assert!(r.passed, "{r:?}");
            assert!(reports.join(&r.margins_csv_path).is_file());
            count += 1;
        }
    }
    assert_eq!(count, 14);
    // A second verify reuses the stored reference.
    assert_eq!(code(&ial(tmp.path(), &["verify", "run"])), 0);
}

#[test]
fn tampered_trace_fails_verification() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_run(tmp.path(), "run", &[])), 0);
    let path = tmp.path().join("run").join(TRACE_JSON);
    let mut sidecar: TraceSidecar = read_json(&path).unwrap();
    for v in sidecar.lambda_path[30].iter_mut() {
        *v += 50.0;
    }
    write_json(&path, &sidecar).unwrap();
    let o = ial(tmp.path(), &["verify", "run"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let r: ReportFile = read_json(&tmp.path().join("run/reports/theorem3_delta.json")).unwrap();
    assert!(!r.passed);
    assert_eq!(r.first_violation_k, Some(31));
}

#[test]
fn missing_trace_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_run(tmp.path(), "run", &[])), 0);
    fs::remove_file(tmp.path().join("run/trace.csv")).unwrap();
    assert_eq!(code(&ial(tmp.path(), &["verify", "run"])), 4);
    assert_eq!(code(&ial(tmp.path(), &["verify", "nowhere"])), 4);
}

#[test]
fn mismatched_instance_is_rejected() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_run(tmp.path(), "run", &[])), 0);
    let text = fs::read_to_string(tmp.path().join("run/instance.json")).unwrap();
    fs::write(tmp.path().join("run/instance.json"), text.replace("seed4", "seed5")).unwrap();
    assert_eq!(code(&ial(tmp.path(), &["verify", "run"])), 4);
}

#[test]
fn inner_budget_abort_keeps_partial_trace() {
    let tmp = TempDir::new().unwrap();
    let o = small_run(tmp.path(), "run", &["--inner", "fw", "--inner-budget", "3"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let (trace, sidecar) = read_trace(&tmp.path().join("run")).unwrap();
    assert!(trace.len() < 60);
    assert!(sidecar.aborted.is_some());
    let o = small_run(
        tmp.path(),
        "best",
        &["--inner", "fw", "--inner-budget", "3", "--accept-best"],
    );
    assert_eq!(code(&o), 0);
    let (trace, _) = read_trace(&tmp.path().join("best")).unwrap();
    assert_eq!(trace.len(), 60);
    assert!(!trace.flagged.is_empty());
}

const INFEASIBLE: &str = r#"{"composite":{"hi":[1.0,1.0],"lo":[-1.0,-1.0],"type":"box"},"constraint":{"a":[[1.0,0.0]],"b":[5.0]},"format":"ial-instance/1","name":"infeasible","smooth":{"type":"zero"}}"#;

#[test]
fn infeasible_instance_is_a_reference_failure() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.json"), INFEASIBLE).unwrap();
    let o = ial(tmp.path(), &["reference", "bad.json", "--out", "ref.json"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = ial(
        tmp.path(),
        &["solve", "bad.json", "--outer-iters", "20", "--out", "run"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(code(&ial(tmp.path(), &["verify", "run"])), 3);
}

#[test]
fn reference_command_writes_file() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        code(&ial(
            tmp.path(),
            &["generate", "l1_basis_pursuit", "8", "3", "2", "i.json"]
        )),
        0
    );
    let o = ial(tmp.path(), &["reference", "i.json", "--out", "ref.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = ial_core::io::read_reference(&tmp.path().join("ref.json")).unwrap();
    assert!(r.feas <= 1e-8 && r.gap <= 1e-10);
    assert_eq!(code(&ial(tmp.path(), &["reference", "i.json", "--tol", "1e-3"])), 4);
}

#[test]
fn sweep_produces_one_row_per_combination() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        code(&ial(tmp.path(), &["generate", "simplex_ls", "10", "3", "1", "i.json"])),
        0
    );
    let o = ial(
        tmp.path(),
        &[
            "sweep",
            "i.json",
            "--alpha",
            "0.6,0.8,1.0",
            "--sigma",
            "0.5,1",
            "--outer-iters",
            "40",
            "--out",
            "sw",
        ],
    );
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let rows = read_sweep_summary(&tmp.path().join("sw").join(SWEEP_SUMMARY_CSV)).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.status == "ok" && r.passed == Some(true)));
    assert!(tmp.path().join("sw/run_005/reports/theorem2.json").is_file());
}

#[test]
fn empty_sweep_list_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        code(&ial(tmp.path(), &["generate", "simplex_ls", "4", "2", "1", "i.json"])),
        0
    );
    assert_eq!(code(&ial(tmp.path(), &["sweep", "i.json", "--alpha", ""])), 4);
    assert_eq!(code(&ial(tmp.path(), &["sweep", "i.json", "--alpha"])), 4);
}

#[test]
fn sweep_slopes_steepen_with_alpha() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        code(&ial(tmp.path(), &["generate", "box_qp", "50", "10", "1", "i.json"])),
        0
    );
    let o = ial(
        tmp.path(),
        &[
            "sweep",
            "i.json",
            "--alpha",
            "0.6,0.8,1.0",
            "--outer-iters",
            "500",
            "--cold-start",
            "--out",
            "sw",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_sweep_summary(&tmp.path().join("sw").join(SWEEP_SUMMARY_CSV)).unwrap();
    let slopes: Vec<f64> = rows.iter().map(|r| r.slope.expect("fitted slope").abs()).collect();
    assert!(slopes[0] < slopes[1] && slopes[1] < slopes[2], "{slopes:?}");
}
