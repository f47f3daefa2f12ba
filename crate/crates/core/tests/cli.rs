use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pupil(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pupil"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_scene(dir: &Path) {
    fs::write(
        dir.join("scene.cfg"),
        "# drifting pupil\npupil_cx = 280\npupil_cy = 230\npupil_a = 26\npupil_b = 22\nnoise_sigma = 2\nglint = 300, 215, 4\ndrift_x = 2\n",
    )
    .unwrap();
}

#[test]
fn synth_detect_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_scene(d);
    let o = pupil(&["synth", "scene.cfg", "--out-dir", "frames", "--frames", "8"], d);
    assert!(o.status.success(), "{o:?}");
    let truth = fs::read_to_string(d.join("frames/truth.csv")).unwrap();
    let lines: Vec<&str> = truth.lines().collect();
    assert_eq!(lines[0], "frame,x,y");
    assert_eq!(lines[1], "0,280.000000,230.000000");
    assert_eq!(lines.len(), 9);
    assert!(!truth.contains('\r'));
    assert!(d.join("frames/000007.png").is_file());

    let o = pupil(&["detect", "frames/000000.png", "--debug-dir", "dbg"], d);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    let f: Vec<&str> = line.trim().split(',').collect();
    assert_eq!(f.len(), 4);
    let (x, y): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
    assert!((x - 280.0).hypot(y - 230.0) < 5.0, "{line}");
    assert_eq!(f[3], "edge");
    assert!(f[2].split('.').nth(1).unwrap().len() == 6);
    for name in ["edges.pgm", "preprocessed.pgm", "regions.pgm", "segments.csv"] {
        assert!(d.join("dbg").join(name).is_file(), "{name}");
    }
    let seg = fs::read_to_string(d.join("dbg/segments.csv")).unwrap();
    assert!(seg.starts_with("segment_id,x,y\n"));

    let o = pupil(&["eval", "frames", "frames/truth.csv", "--out-dir", "out", "--max-threshold", "10"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("rate@5=1.000000"));
    let frames = fs::read_to_string(d.join("out/frames.csv")).unwrap();
    assert!(frames.starts_with("frame,x,y,confidence,stage,used_roi,ms\n"));
    assert_eq!(frames.lines().count(), 9);
    let curve = fs::read_to_string(d.join("out/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 11);
    assert!(curve.lines().nth(5).unwrap().starts_with("5,1.000000"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = pupil(&["version"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("pupil "));

    assert_eq!(pupil(&[], d).status.code(), Some(1));
    assert_eq!(pupil(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(pupil(&["eval", "only-one-arg"], d).status.code(), Some(1));
    assert_eq!(pupil(&["eval", "a", "b", "--max-threshold", "0"], d).status.code(), Some(1));

    assert_eq!(pupil(&["detect", "missing.png"], d).status.code(), Some(2));
    fs::write(d.join("junk.png"), b"not an image").unwrap();
    assert_eq!(pupil(&["detect", "junk.png"], d).status.code(), Some(2));
    fs::write(d.join("bad.cfg"), "tau_good = 0.3\nnot_a_key = 1\n").unwrap();
    write_scene(d);
    assert!(pupil(&["synth", "scene.cfg", "--out-dir", "f", "--frames", "1"], d).status.success());
    let o = pupil(&["detect", "f/000000.png", "--config", "bad.cfg"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:2"));
    fs::write(d.join("gt.csv"), "0,abc,1\n").unwrap();
    assert_eq!(pupil(&["eval", "f", "gt.csv"], d).status.code(), Some(2));
    fs::write(d.join("far.cfg"), "pupil_cx = 600\n").unwrap();
    assert_eq!(pupil(&["synth", "far.cfg", "--out-dir", "g"], d).status.code(), Some(2));
}

#[test]
fn detect_reports_miss_for_blank_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let blank = pupil_core::image::GrayImage::filled(64, 48, 128);
    pupil_core::image::save_image(&blank, d.join("blank.pgm")).unwrap();
    let o = pupil(&["detect", "blank.pgm"], d);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), ",,0.000000,none\n");
}
