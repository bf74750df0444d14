use std::fs;
use std::path::Path;
use std::process::Command;

use remaster_core::harness::SceneConfig;

fn remaster(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_remaster"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "remaster {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_all_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let stdout_a = remaster(&["run-all", "-o", path(a.path())]);
    let stdout_b = remaster(&["run-all", "-o", path(b.path())]);
    assert_eq!(stdout_a, stdout_b);
    for file in [
        "report.txt",
        "report.json",
        "motion_capture/optimization_dataset.txt",
        "motion_capture/trace.txt",
        "laser_tracker/calibration.toml",
    ] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty(), "{file} is empty");
        assert!(x == y, "{file} differs between runs");
    }
    let json: String = fs::read_to_string(a.path().join("report.json")).unwrap();
    assert!(json.contains("\"scene\""));
    assert!(stdout_a.contains("motion_capture") && stdout_a.contains("laser_tracker"));
}

#[test]
fn stepwise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let d = |f: &str| dir.path().join(f);

    remaster(&["generate-poses", "-o", out]);
    remaster(&["generate-poses", "--set", "validation", "-o", out]);
    remaster(&["simulate", "--configs", path(&d("optimization_configs.txt")), "-o", out]);
    remaster(&[
        "simulate",
        "--set",
        "validation",
        "--configs",
        path(&d("validation_configs.txt")),
        "-o",
        out,
    ]);
    remaster(&["calibrate", "--dataset", path(&d("optimization_dataset.txt")), "-o", out]);
    let evaluation = remaster(&[
        "evaluate",
        "--dataset",
        path(&d("optimization_dataset.txt")),
        "--calibration",
        path(&d("calibration.toml")),
        "--trace",
        path(&d("trace.txt")),
        "-o",
        out,
    ]);
    let validation = remaster(&[
        "validate",
        "--dataset",
        path(&d("validation_dataset.txt")),
        "--calibration",
        path(&d("calibration.toml")),
        "-o",
        out,
    ]);
    assert!(evaluation.contains("Relative accuracy") && evaluation.contains("Theoretical accuracy"));
    assert!(validation.contains("Post-registration accuracy"));
    for f in ["calibration_report.txt", "evaluation.txt", "validation.txt"] {
        assert!(d(f).exists(), "{f} missing");
    }

    // The stepwise datasets match what run-all produces for the same scene and seed.
    let all = tempfile::tempdir().unwrap();
    remaster(&["run-all", "--scene", path(&scene_file(dir.path())), "-o", path(all.path())]);
    assert_eq!(
        fs::read(d("optimization_dataset.txt")).unwrap(),
        fs::read(all.path().join("motion_capture/optimization_dataset.txt")).unwrap()
    );
}

fn scene_file(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("scene.toml");
    fs::write(&p, SceneConfig::motion_capture().to_toml_string()).unwrap();
    p
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.txt");
    fs::write(&bogus, "not a dataset\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_remaster"))
        .args(["calibrate", "--dataset", path(&bogus), "-o", path(dir.path())])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
