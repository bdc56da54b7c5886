use std::path::Path;
use std::process::{Command, Output};

use tore_core::io::{read_events_binary, read_tensor};

fn tore(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tore"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn tore")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn simulate_ramp(dir: &Path, size: &str) {
    let out = tore(
        dir,
        &[
            "simulate", "--eps", "0.1", "--slope", "0.001", "--dur", "1000000", "--size", size, "-o", "ev.evt",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_ramp_event_count() {
    let dir = tempfile::tempdir().unwrap();
    simulate_ramp(dir.path(), "1x1");
    let stream = read_events_binary(dir.path().join("ev.evt")).unwrap();
    assert_eq!(stream.len(), 10_000);
    let times: Vec<u64> = stream.events().iter().take(3).map(|e| e.t).collect();
    assert_eq!(times, vec![100, 200, 300]);
    assert!(dir.path().join("ev.evt.manifest.toml").exists());
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tore(dir.path(), &["simulate", "--eps", "0", "-o", "a.evt"])), 2);
    assert_eq!(
        code(&tore(dir.path(), &["simulate", "--signal", "chirp", "-o", "b.evt"])),
        2
    );
    assert!(!dir.path().join("a.evt").exists());
}

#[test]
fn constant_signal_is_silent() {
    let dir = tempfile::tempdir().unwrap();
    let out = tore(dir.path(), &["simulate", "--signal", "constant", "-o", "c.evt"]);
    assert_eq!(code(&out), 0);
    assert!(read_events_binary(dir.path().join("c.evt")).unwrap().is_empty());
}

#[test]
fn render_rate_grid_and_default_depth() {
    let dir = tempfile::tempdir().unwrap();
    simulate_ramp(dir.path(), "3x2");
    let out = tore(
        dir.path(),
        &["render", "-i", "ev.evt", "--rate", "1000", "--span", "0:10000"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<_> = std::fs::read_dir(dir.path().join("volumes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "tor"))
        .collect();
    files.sort();
    assert_eq!(files.len(), 11);
    for f in &files {
        assert_eq!(read_tensor(f).unwrap().dims(), &[2, 4, 2, 3]);
    }
    assert!(dir.path().join("volumes/manifest.toml").exists());
}

#[test]
fn render_rejects_unsorted_times() {
    let dir = tempfile::tempdir().unwrap();
    simulate_ramp(dir.path(), "1x1");
    let out = tore(dir.path(), &["render", "-i", "ev.evt", "--at", "500", "--at", "400"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("volumes").exists());
}

#[test]
fn patch_shape_and_odd_side() {
    let dir = tempfile::tempdir().unwrap();
    simulate_ramp(dir.path(), "16x16");
    let out = tore(
        dir.path(),
        &["patch", "-i", "ev.evt", "-m", "9", "-k", "7", "--index", "42"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let patch = read_tensor(dir.path().join("patches/patch_e0000000042.tor")).unwrap();
    assert_eq!(patch.dims(), &[2, 7, 9, 9]);
    let even = tore(
        dir.path(),
        &["patch", "-i", "ev.evt", "-m", "8", "--index", "42", "--out-dir", "p2"],
    );
    assert_eq!(code(&even), 2);
}

#[test]
fn baselines_shapes() {
    let dir = tempfile::tempdir().unwrap();
    simulate_ramp(dir.path(), "5x4");
    let voxel = tore(
        dir.path(),
        &[
            "baseline", "voxel", "-i", "ev.evt", "--window", "50000", "--end", "100000", "-o", "v.tor",
        ],
    );
    assert_eq!(code(&voxel), 0);
    assert_eq!(read_tensor(dir.path().join("v.tor")).unwrap().dims(), &[5, 4, 5]);

    let sae = tore(
        dir.path(),
        &["baseline", "sae", "-i", "ev.evt", "--end", "100000", "-o", "s.tor"],
    );
    assert_eq!(code(&sae), 0);
    assert_eq!(read_tensor(dir.path().join("s.tor")).unwrap().dims(), &[2, 4, 5]);
    assert_eq!(read_tensor(dir.path().join("s_mask.tor")).unwrap().dims(), &[2, 4, 5]);

    let bad = tore(dir.path(), &["baseline", "histogram", "-i", "ev.evt", "--end", "1"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn bench_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = tore(
        dir.path(),
        &[
            "bench",
            "--events",
            "5000",
            "--size",
            "32x32",
            "--reps",
            "2",
            "--k-sweep",
            "1,4",
            "-o",
            "b.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("case,param,median,p95"));
    let rows: Vec<_> = lines.collect();
    assert!(rows.iter().any(|r| r.starts_with("ingest_events_per_sec,")));
    assert_eq!(rows.iter().filter(|r| r.starts_with("render_ms,")).count(), 2);
    for r in &rows {
        assert_eq!(r.split(',').count(), 4, "{r}");
    }
}

#[test]
fn verify_passes_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "--seed", "7", "--cases", "3", "--events", "3000"];
    let a = tore(dir.path(), &args);
    let b = tore(dir.path(), &args);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(!stdout(&a).contains("FAIL"));
}

#[test]
fn verify_reports_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let out = tore(
        dir.path(),
        &["verify", "--cases", "2", "--events", "2000", "--inject-fault"],
    );
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("FAIL oracle-equivalence"), "{text}");
    assert!(text.contains("cell channel="), "{text}");
}

#[test]
fn outputs_are_not_overwritten_and_rerun_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    simulate_ramp(dir.path(), "2x2");
    let first = std::fs::read(dir.path().join("ev.evt")).unwrap();

    let again = tore(dir.path(), &["simulate", "-o", "ev.evt"]);
    assert_eq!(code(&again), 2);
    assert_eq!(std::fs::read(dir.path().join("ev.evt")).unwrap(), first);

    std::fs::remove_file(dir.path().join("ev.evt")).unwrap();
    let rerun = tore(dir.path(), &["rerun", "ev.evt.manifest.toml"]);
    assert_eq!(code(&rerun), 0, "{}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(std::fs::read(dir.path().join("ev.evt")).unwrap(), first);
}
