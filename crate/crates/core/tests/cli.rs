use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keytriplet"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let out = run(&[
        "synth",
        "--scenes",
        "6",
        "--seed",
        "3",
        "--noise-corners",
        "2",
        "-o",
        s(&scenes),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(scenes.join("ground_truth.json").exists());
    assert!(scenes.join("run_config.json").exists());

    let dets = dir.path().join("dets");
    assert_eq!(code(&run(&["decode", s(&scenes), "--threads", "2", "-o", s(&dets)])), 0);
    let eval = run(&[
        "eval",
        "--dets",
        s(&dets.join("detections.json")),
        "--gt",
        s(&scenes.join("ground_truth.json")),
        "-o",
        s(&dets),
    ]);
    assert_eq!(code(&eval), 0);
    assert!(String::from_utf8_lossy(&eval.stdout).contains("AP50"));
    assert!(dets.join("report.json").exists());

    let ab = dir.path().join("ab");
    let out = run(&["ablate", s(&scenes), "-o", s(&ab)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("delta"));
    assert!(ab.join("filtered/run_config.json").exists());

    let bench = dir.path().join("bench");
    let out = run(&["bench", s(&scenes), "--threads", "3", "--repeat", "2", "-o", s(&bench)]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(bench.join("detections.json")).unwrap(),
        std::fs::read(dets.join("detections.json")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["decode"])), 1);
    assert_eq!(code(&run(&["synth", "-o", s(dir.path()), "--aspect-min", "0.5"])), 1);
    assert_eq!(
        code(&run(&["decode", s(dir.path()), "--threads", "0", "-o", s(dir.path())])),
        1
    );

    // missing scenes directory
    assert_eq!(
        code(&run(&["decode", s(&dir.path().join("nope")), "-o", s(dir.path())])),
        2
    );

    // single-resolution scenes decoded as multi-resolution
    let scenes = dir.path().join("sr");
    assert_eq!(code(&run(&["synth", "--scenes", "1", "-o", s(&scenes)])), 0);
    assert_eq!(
        code(&run(&["decode", s(&scenes), "--mode", "mr", "-o", s(dir.path())])),
        2
    );

    // a corrupted grid file
    let grid = std::fs::read_dir(scenes.join("scenes/00000"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "cngrid"))
        .unwrap();
    std::fs::write(&grid, b"garbage").unwrap();
    let out = run(&["decode", s(&scenes), "-o", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error"));
}
