use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use stenosis_core::phantom::PhantomSpec;
use stenosis_core::{Frame, StenosisReport};

const BIN: &str = env!("CARGO_BIN_EXE_stenosis");

fn stenosis(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn stenosis")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One rendered r = R/2 sequence shared by the tests in this file.
fn phantom() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = stenosis(&[
            "render",
            "--r-min",
            "0.5",
            "--noise",
            "2",
            "--seed",
            "5",
            "--out",
            s(dir.path()),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        dir
    })
    .path()
}

fn run_args<'a>(dir: &'a Path, calib: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["run", "--input", s(dir), "--calibration", calib];
    v.extend_from_slice(extra);
    v
}

#[test]
fn render_writes_frames_depth_and_truth() {
    let dir = phantom();
    assert!(dir.join("frame_000000.png").exists());
    assert!(dir.join("frame_000199.png").exists());
    assert!(dir.join("depth_000199.bin").exists());
    let truth = std::fs::read_to_string(dir.join("truth.json")).unwrap();
    assert!(truth.contains("\"psa_true\": 75.0"));
    let spec =
        PhantomSpec::from_json(&std::fs::read_to_string(dir.join("spec.json")).unwrap()).unwrap();
    assert_eq!(spec.noise_sigma, 2.0);
}

#[test]
fn run_with_file_depth_reports_the_stenosis() {
    let dir = phantom();
    let calib = dir.join("calibration.txt");
    let depth = format!("file:{}", dir.display());
    let out = stenosis(&run_args(dir, s(&calib), &["--depth", &depth]));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = StenosisReport::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(
        (70.0..=80.0).contains(&report.psa()),
        "PSA {}",
        report.psa()
    );
    assert!(
        (45.0..=55.0).contains(&report.psd()),
        "PSD {}",
        report.psd()
    );
    assert_eq!(report.keyframe_index, 60);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("timing: tracking"), "{stderr}");
}

#[test]
fn manual_keyframe_bypasses_tracking() {
    let dir = phantom();
    let calib = dir.join("calibration.txt");
    let depth = format!("file:{}", dir.display());
    let out = stenosis(&run_args(
        dir,
        s(&calib),
        &["--depth", &depth, "--manual-keyframe", "100"],
    ));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = StenosisReport::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report.keyframe_index, 100);
    assert_eq!(
        serde_json::to_value(report.provenance.keyframe_source).unwrap(),
        "manual"
    );

    let out = stenosis(&run_args(dir, s(&calib), &["--manual-keyframe", "500"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn geometry_failure_exits_4() {
    // In front of the cords the darkest region is the glottal opening, whose
    // contour does not close around the optical axis.
    let dir = phantom();
    let calib = dir.join("calibration.txt");
    let depth = format!("file:{}", dir.display());
    let out = stenosis(&run_args(
        dir,
        s(&calib),
        &["--depth", &depth, "--manual-keyframe", "10"],
    ));
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry: frame 10"));
}

#[test]
fn trace_subcommand_logs_every_frame() {
    let dir = phantom();
    let calib = dir.join("calibration.txt");
    let out = stenosis(&["trace", "--input", s(dir), "--calibration", s(&calib)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // Header, frames 0..=85 (lost at the 26th miss), decision.
    assert_eq!(text.lines().count(), 1 + 86 + 1);
    let lost = text.lines().find(|l| l.ends_with(" lost")).unwrap();
    assert!(
        lost.starts_with("85 ") && lost.ends_with(" 26 lost"),
        "{lost}"
    );
    assert!(
        text.ends_with("# keyframe 60 (IoUBreak from frame 60)\n"),
        "{text}"
    );
}

#[test]
fn eval_summarizes_reports() {
    let dir = phantom();
    let work = tempfile::tempdir().unwrap();
    let calib = dir.join("calibration.txt");
    let depth = format!("file:{}", dir.display());
    let report = work.path().join("a.json");
    let out = stenosis(&run_args(
        dir,
        s(&calib),
        &["--depth", &depth, "--report", s(&report)],
    ));
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    std::fs::copy(dir.join("truth.json"), work.path().join("truth.json")).unwrap();
    let manifest = work.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"cases": [{"sequence_id": "phantom-a", "report": "a.json", "truth": "truth.json"}], "pairs": [["phantom-a", "phantom-a"]]}"#,
    )
    .unwrap();
    let out = stenosis(&["eval", "--manifest", s(&manifest)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("correct keyframes: 100.00%"), "{text}");
    assert!(text.contains("PSA MAE: all tests"), "{text}");
    assert!(text.contains("(0.00)"), "{text}");
}

#[test]
fn missing_input_exits_2() {
    let work = tempfile::tempdir().unwrap();
    let calib = work.path().join("calib.txt");
    std::fs::write(
        &calib,
        "fx = 10\nfy = 10\ncx = 4\ncy = 4\nwidth = 8\nheight = 8\n",
    )
    .unwrap();
    let out = stenosis(&[
        "run",
        "--input",
        s(&work.path().join("nope")),
        "--calibration",
        s(&calib),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: ingest"));

    let out = stenosis(&[
        "run",
        "--input",
        s(work.path()),
        "--calibration",
        s(&calib),
        "--min-iou",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_keyframe_exits_3() {
    let work = tempfile::tempdir().unwrap();
    let mut spec = PhantomSpec::standard(0.5, 0.0, 0);
    spec.camera_z.truncate(30);
    let spec_path = work.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_json()).unwrap();
    let seq = work.path().join("seq");
    let out = stenosis(&[
        "render",
        "--spec",
        s(&spec_path),
        "--size",
        "96",
        "--focal",
        "48",
        "--out",
        s(&seq),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = stenosis(&[
        "run",
        "--input",
        s(&seq),
        "--calibration",
        s(&seq.join("calibration.txt")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = stenosis(&[
        "trace",
        "--input",
        s(&seq),
        "--calibration",
        s(&seq.join("calibration.txt")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("# no keyframe"));
}

#[test]
fn unusable_depth_exits_5() {
    let work = tempfile::tempdir().unwrap();
    for i in 0..3 {
        Frame::filled(i, 32, 32, 0)
            .save_png(&work.path().join(format!("f{i}.png")))
            .unwrap();
    }
    let calib = work.path().join("calib.txt");
    std::fs::write(
        &calib,
        "fx = 30\nfy = 30\ncx = 15.5\ncy = 15.5\nwidth = 32\nheight = 32\n",
    )
    .unwrap();
    let out = stenosis(&[
        "run",
        "--input",
        s(work.path()),
        "--calibration",
        s(&calib),
        "--manual-keyframe",
        "1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth: frame 1"));
}
