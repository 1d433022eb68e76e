use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn planesdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planesdf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, scenario: &str, seed: &str) {
    let out = planesdf(&["gen", "--scenario", scenario, "--seed", seed, "--out", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn vertex_count(ply: &Path) -> usize {
    let text = fs::read_to_string(ply).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn missing_input_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let missing = tmp.path().join("nope.ply");
    let out = planesdf(&["detect", "--source", s(&missing), "--target", s(&missing), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ply"));
    assert!(!out_dir.exists());
}

#[test]
fn malformed_ply_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.ply");
    fs::write(&bad, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n").unwrap();
    let out = planesdf(&["detect", "--source", s(&bad), "--target", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn bad_config_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "add", "1");
    let src = tmp.path().join("source.ply");
    let out_dir = tmp.path().join("out");
    for args in [
        vec!["--set", "voxel_size=-1"],
        vec!["--set", "no_such_key=1"],
        vec!["--set", "delta_n"],
    ] {
        let mut full = vec!["detect", "--source", s(&src), "--target", s(&src), "--out", s(&out_dir)];
        full.extend(args);
        let out = planesdf(&full);
        assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "delta_h = lots\n").unwrap();
    let out = planesdf(&["detect", "--source", s(&src), "--target", s(&src), "--out", s(&out_dir), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_direction_is_a_usage_error() {
    let out = planesdf(&["detect", "--source", "a.ply", "--target", "b.ply", "--out", "o", "--direction", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_detect_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    gen(&scene, "remove", "2");
    for f in ["source.ply", "target.ply", "gt_forward.ply", "gt_backward.ply", "gt.ply", "ground_truth.csv"] {
        assert!(scene.join(f).exists(), "{f}");
    }
    assert_eq!(vertex_count(&scene.join("gt_backward.ply")), 0);

    let out_dir = tmp.path().join("out");
    let out = planesdf(&[
        "detect",
        "--source",
        s(&scene.join("source.ply")),
        "--target",
        s(&scene.join("target.ply")),
        "--gt",
        s(&scene.join("gt.ply")),
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("precision: 1.000000"), "{stdout}");
    assert!(stdout.contains("missed_objects: 0"));

    for f in ["config.txt", "source_planes.csv", "target_planes.csv", "changed_voxels.ply", "report.txt", "report.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    for dir in ["forward", "backward"] {
        let d = out_dir.join(dir);
        for f in ["pairings.csv", "unmatched.csv", "changed_voxels.ply", "plane_0_height.pgm", "plane_0_objects.csv"] {
            assert!(d.join(f).exists(), "{dir}/{f}");
        }
        let masks = fs::read_dir(&d)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with("_3d.pgm"))
            .count();
        assert!(masks > 0);
    }
    assert!(vertex_count(&out_dir.join("forward/changed_voxels.ply")) > 0);
    assert_eq!(vertex_count(&out_dir.join("backward/changed_voxels.ply")), 0);

    let eval = planesdf(&[
        "eval",
        "--detected",
        s(&out_dir.join("changed_voxels.ply")),
        "--gt",
        s(&scene.join("gt.ply")),
    ]);
    assert!(eval.status.success());
    assert_eq!(
        String::from_utf8_lossy(&eval.stdout),
        fs::read_to_string(out_dir.join("report.txt")).unwrap()
    );
}

#[test]
fn identical_inputs_give_empty_output_and_deterministic_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "move", "4");
    let src = tmp.path().join("source.ply");
    let run = |name: &str| {
        let out_dir = tmp.path().join(name);
        let out = planesdf(&[
            "detect",
            "--source",
            s(&src),
            "--target",
            s(&src),
            "--out",
            s(&out_dir),
            "--dump-volumes",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(vertex_count(&a.join("changed_voxels.ply")), 0);
    let mut names: Vec<_> = fs::read_dir(a.join("forward"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n.to_string_lossy().ends_with(".psdf")));
    for n in &names {
        assert_eq!(
            fs::read(a.join("forward").join(n)).unwrap(),
            fs::read(b.join("forward").join(n)).unwrap(),
            "{n:?}"
        );
    }
    assert_eq!(fs::read(a.join("config.txt")).unwrap(), fs::read(b.join("config.txt")).unwrap());
}

#[test]
fn gen_rejects_negative_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let out = planesdf(&["gen", "--scenario", "add", "--noise", "-0.1", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}
