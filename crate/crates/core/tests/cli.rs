use std::path::Path;
use std::process::{Command, Output};

use treeem::csv_io::write_matrix;
use treeem::experiment::CSV_HEADER;
use treeem::nalgebra::DMatrix;

fn treeem(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeem"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn chain_cov() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.72, 0.9, 1.0, 0.8, 0.72, 0.8, 1.0])
}

#[test]
fn chowliu_prints_edges_and_kl() {
    let dir = tempfile::tempdir().unwrap();
    write_matrix(dir.path().join("s.csv"), &chain_cov()).unwrap();
    let out = treeem(
        &["chowliu", "--input", "s.csv", "--cov", "t.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.starts_with("0,1\n1,2\n"), "{text}");
    let kl: f64 = text
        .lines()
        .last()
        .unwrap()
        .strip_prefix("kl = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(kl.abs() < 1e-12);
    let tree = treeem::csv_io::read_matrix(dir.path().join("t.csv")).unwrap();
    assert!((tree - chain_cov()).abs().max() < 1e-15);
}

#[test]
fn em_writes_estimate_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_matrix(p.join("sigma0.csv"), &DMatrix::identity(3, 3)).unwrap();
    write_matrix(
        p.join("h.csv"),
        &DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0]),
    )
    .unwrap();
    write_matrix(p.join("d.csv"), &(DMatrix::identity(2, 2) * 0.1)).unwrap();
    write_matrix(p.join("truth.csv"), &chain_cov()).unwrap();
    let model = treeem::LinearModel::new(
        treeem::csv_io::read_matrix(p.join("h.csv")).unwrap(),
        treeem::CovMatrix::identity(2).scaled(0.1).unwrap(),
    )
    .unwrap();
    let truth = treeem::CovMatrix::new(chain_cov()).unwrap();
    let obs = treeem::sample_observations(&model, &truth, 200, 9).unwrap();
    write_matrix(p.join("y.csv"), obs.samples()).unwrap();
    let out = treeem(
        &[
            "em",
            "--sigma0",
            "sigma0.csv",
            "--h",
            "h.csv",
            "--d",
            "d.csv",
            "--obs",
            "y.csv",
            "--truth",
            "truth.csv",
            "--out",
            "est.csv",
            "--trace",
            "trace.json",
        ],
        p,
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("stop_reason = "));
    let est = treeem::csv_io::read_matrix(p.join("est.csv")).unwrap();
    assert!(treeem::CovMatrix::new(est).is_ok());
    let trace: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("trace.json")).unwrap()).unwrap();
    let iterations = trace["iterations"].as_array().unwrap();
    assert!(!iterations.is_empty());
    assert!(iterations[0]["step_kl"].is_null());
    assert!(iterations[0]["latent_kl"].is_f64());
}

#[test]
fn sweep_writes_outputs_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.conf"),
        "p = 4\nm_values = 2,3\ntrials = 2\nr = 40\n",
    )
    .unwrap();
    let out = treeem(
        &[
            "sweep", "--config", "s.conf", "--trials", "3", "--output", "run",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn sweep_without_output_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = treeem(
        &[
            "sweep",
            "--p",
            "3",
            "--m_values",
            "2",
            "--trials",
            "1",
            "--r",
            "30",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "nonsense = 1\n").unwrap();
    let config_err = treeem(&["sweep", "--config", "bad.conf"], dir.path());
    assert_eq!(config_err.status.code(), Some(1));
    let bad_value = treeem(&["sweep", "--trials", "many"], dir.path());
    assert_eq!(bad_value.status.code(), Some(1));
    let missing = treeem(&["chowliu", "--input", "absent.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(3));
    let all_failed = treeem(
        &[
            "sweep",
            "--p",
            "4",
            "--m_values",
            "3",
            "--trials",
            "2",
            "--r",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(all_failed.status.code(), Some(2), "{all_failed:?}");
    write_matrix(
        dir.path().join("indef.csv"),
        &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
    )
    .unwrap();
    let numeric = treeem(&["chowliu", "--input", "indef.csv"], dir.path());
    assert_eq!(numeric.status.code(), Some(2));
}
