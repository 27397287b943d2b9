//! End-to-end checks of the `segdx` binary: exit codes, artifact layout,
//! manifest digests, sweep resume, and report emission. Training schedules
//! are cut to a few steps; statistical quality is the acceptance suite's
//! job, not this file's.

use std::path::Path;
use std::process::{Command, Output};

fn segdx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segdx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen_data(dir: &Path) {
    let out = segdx(&["phantom-gen", "--profile", "desk", "--seed", "7", "--out", dir.to_str().unwrap()]);
    assert_ok(&out);
}

fn digest_of(dir: &Path) -> String {
    let text = std::fs::read_to_string(dir.join("run_manifest.txt")).unwrap();
    text.lines()
        .find(|l| l.starts_with("digest="))
        .expect("digest line")
        .to_string()
}

#[test]
fn phantom_gen_writes_counts_and_stable_digests() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    gen_data(d1.path());
    gen_data(d2.path());
    let stdout = segdx(&["phantom-gen", "--profile", "desk", "--seed", "7", "--out", d1.path().to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&stdout.stdout).contains("20 patients"));
    assert_eq!(digest_of(d1.path()), digest_of(d2.path()));
    let m1 = std::fs::read(d1.path().join("manifest.tsv")).unwrap();
    let m2 = std::fs::read(d2.path().join("manifest.tsv")).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn missing_out_flag_exits_2() {
    let out = segdx(&["phantom-gen", "--profile", "desk"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn unknown_flag_exits_2() {
    let out = segdx(&["phantom-gen", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_dir_exits_3() {
    let out = segdx(&["seg-train", "--data", "/nonexistent-segdx", "--out", "/tmp/x", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seg_train_then_eval_checkpoint_round_trip() {
    let data = tempfile::tempdir().unwrap();
    gen_data(data.path());
    let run = tempfile::tempdir().unwrap();
    let out = segdx(&[
        "seg-train",
        "--data", data.path().to_str().unwrap(),
        "--n", "2",
        "--fold", "0",
        "--seed", "7",
        "--epochs", "1",
        "--batches-per-epoch", "5",
        "--out", run.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let ckpt = run.path().join("segnet.ckpt");
    assert!(ckpt.exists());
    assert!(run.path().join("loss_history.csv").exists());

    // Scoring the same checkpoint twice prints identical tables.
    let eval = |split: &str| {
        let out = segdx(&[
            "seg-eval",
            "--data", data.path().to_str().unwrap(),
            "--ckpt", ckpt.to_str().unwrap(),
            "--fold", "0",
            "--split", split,
            "--seed", "7",
        ]);
        assert_ok(&out);
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(eval("test"), eval("test"));

    // Byte-identical save -> load -> save.
    let bytes = std::fs::read(&ckpt).unwrap();
    let loaded = segdx::net::load_checkpoint(&ckpt).unwrap();
    let copy = run.path().join("copy.ckpt");
    segdx::net::save_checkpoint(&copy, &loaded).unwrap();
    assert_eq!(bytes, std::fs::read(&copy).unwrap());
}

fn tiny_sweep(data: &Path, out: &Path, reps: &str) -> Output {
    segdx(&[
        "sweep",
        "--data", data.to_str().unwrap(),
        "--disease", "effusion",
        "--modes", "IMG",
        "--npos", "1..2",
        "--reps", reps,
        "--epochs", "1",
        "--batches-per-epoch", "3",
        "--seed", "7",
        "--jobs", "2",
        "--out", out.to_str().unwrap(),
    ])
}

#[test]
fn sweep_writes_expected_rows_and_resumes() {
    let data = tempfile::tempdir().unwrap();
    gen_data(data.path());
    let run = tempfile::tempdir().unwrap();

    let out = tiny_sweep(data.path(), run.path(), "1");
    assert_ok(&out);
    let csv = std::fs::read_to_string(run.path().join("sweep.csv")).unwrap();
    // header + modes x npos x reps = 1 x 2 x 1.
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(run.path().join("predictions/effusion_IMG_1_0.tsv").exists());

    // Re-run with more repetitions: the two existing rows are skipped.
    let out = tiny_sweep(data.path(), run.path(), "2");
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("skipped"));
    let csv2 = std::fs::read_to_string(run.path().join("sweep.csv")).unwrap();
    assert_eq!(csv2.lines().count(), 5, "{csv2}");
    // The resumed file still contains the original rows verbatim.
    for line in csv.lines() {
        assert!(csv2.contains(line));
    }
}

#[test]
fn sweep_with_seg_mode_but_no_checkpoint_exits_4() {
    let data = tempfile::tempdir().unwrap();
    gen_data(data.path());
    let run = tempfile::tempdir().unwrap();
    let out = segdx(&[
        "sweep",
        "--data", data.path().to_str().unwrap(),
        "--modes", "CONCAT",
        "--npos", "1",
        "--reps", "1",
        "--out", run.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_renders_byte_stable_svgs_and_rejects_garbage() {
    let data = tempfile::tempdir().unwrap();
    gen_data(data.path());
    let run = tempfile::tempdir().unwrap();
    assert_ok(&tiny_sweep(data.path(), run.path(), "1"));
    let sweep_csv = run.path().join("sweep.csv");

    let r1 = tempfile::tempdir().unwrap();
    let r2 = tempfile::tempdir().unwrap();
    for r in [&r1, &r2] {
        let out = segdx(&[
            "report",
            "--in", sweep_csv.to_str().unwrap(),
            "--out", r.path().to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    let svg1 = std::fs::read(r1.path().join("effusion_TPR.svg")).unwrap();
    let svg2 = std::fs::read(r2.path().join("effusion_TPR.svg")).unwrap();
    assert_eq!(svg1, svg2);
    let text = String::from_utf8(svg1).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert!(r1.path().join("ranking.txt").exists());

    // Malformed CSV is an I/O-category failure.
    let bad = run.path().join("bad.csv");
    std::fs::write(&bad, "not,a,sweep\n1,2,3\n").unwrap();
    let out = segdx(&["report", "--in", bad.to_str().unwrap(), "--out", r1.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_merges_under_flags() {
    let data = tempfile::tempdir().unwrap();
    gen_data(data.path());
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        format!("data={}\nseed=7\nprofile=desk\n", data.path().display()),
    )
    .unwrap();
    // data and seed come from the config; out from the flag.
    let run = tempfile::tempdir().unwrap();
    let out = segdx(&[
        "seg-train",
        "--config", conf.to_str().unwrap(),
        "--n", "2",
        "--epochs", "1",
        "--batches-per-epoch", "2",
        "--out", run.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let manifest = std::fs::read_to_string(run.path().join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("seed=7"));
}

#[test]
fn cls_train_smoke_with_img_mode() {
    let data = tempfile::tempdir().unwrap();
    gen_data(data.path());
    let run = tempfile::tempdir().unwrap();
    let out = segdx(&[
        "cls-train",
        "--data", data.path().to_str().unwrap(),
        "--mode", "IMG",
        "--disease", "septal",
        "--npos", "2",
        "--rep", "0",
        "--epochs", "1",
        "--batches-per-epoch", "3",
        "--seed", "3",
        "--out", run.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(run.path().join("clsnet.ckpt").exists());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("septal IMG npos=2"), "{text}");
}
