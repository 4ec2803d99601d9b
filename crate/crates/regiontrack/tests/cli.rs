use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regiontrack"))
        .args(args)
        .output()
        .expect("spawn regiontrack")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.tpl");
    assert_eq!(run(&["precompute", "/no/such/mesh.obj", "-o", s(&out)]).status.code(), Some(2));
    assert_eq!(run(&["precompute", "builtin:nope", "-o", s(&out)]).status.code(), Some(2));
    assert_eq!(run(&["track"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["track", s(dir.path()), "--templates", s(&out), "-o", s(&dir.path().join("x.csv"))])
            .status
            .code(),
        Some(2)
    );
    assert!(!out.exists());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tpl = d.join("box.tpl");
    let tpl2 = d.join("again.tpl");
    for p in [&tpl, &tpl2] {
        ok(&["precompute", "builtin:box", "-o", s(p), "--voxel", "0.004", "--threads", "1"]);
    }
    assert_eq!(fs::read(&tpl).unwrap(), fs::read(&tpl2).unwrap());
    assert_eq!(fs::read(d.join("box.vol")).unwrap(), fs::read(d.join("again.vol")).unwrap());

    let seq = d.join("seq");
    ok(&[
        "generate", s(&seq), "--mesh", "builtin:box", "--frames", "12", "--seed", "4", "--colors",
        "200,60,40;40,60,200;220,200,40;60,180,200;180,60,200;240,240,240", "--angular-rate", "0.01", "--sweep", "0.03,0.02,0",
    ]);
    assert!(seq.join("camera.json").exists());
    assert!(seq.join("gt_poses.csv").exists());

    let traj = d.join("traj.csv");
    ok(&["track", s(&seq), "--templates", s(&tpl), "-o", s(&traj), "--overlay"]);
    let text = fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert_eq!(fs::read_dir(d.join("overlay")).unwrap().count(), 12);

    let report = d.join("metrics.csv");
    let stdout = ok(&[
        "metrics", s(&traj), "--gt", s(&seq.join("gt_poses.csv")), "--mesh", "builtin:box", "-o", s(&report),
    ]);
    assert!(stdout.contains("LineMOD score: 1.0000"), "{stdout}");
    let csv = fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let study = d.join("study.csv");
    ok(&[
        "perturb-study", s(&seq), "--templates", s(&tpl), "--mesh", "builtin:box", "-o", s(&study), "--thetas", "0",
        "--t-max", "0", "--schemes", "2-2-2", "--n", "3", "--frames", "2",
    ]);
    let rows: Vec<String> = fs::read_to_string(&study).unwrap().lines().map(String::from).collect();
    assert_eq!(rows.len(), 2);
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = header.iter().position(|h| *h == "score").unwrap();
    assert_eq!(rows[1].split(',').nth(col).unwrap().parse::<f64>().unwrap(), 1.0);

    let bad_cfg = d.join("bad.cfg");
    fs::write(&bad_cfg, "lambda = banana\n").unwrap();
    let out = run(&["track", s(&seq), "--templates", s(&tpl), "-o", s(&traj), "--config", s(&bad_cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["track", s(&seq), "--templates", s(&tpl), "-o", s(&traj), "--init", "1,2,3"]);
    assert_eq!(out.status.code(), Some(2));
}
