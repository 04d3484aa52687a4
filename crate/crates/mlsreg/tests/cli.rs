use std::path::Path;
use std::process::{Command, Output};

use mlsreg::core::synth::{box_layout, random_perturbation, sample_layout, BoxSceneSpec};
use mlsreg::core::{apply_transform, RigidTransform};
use mlsreg::io::tables::read_drift_csv;
use mlsreg::io::trajectory::write_trajectory;
use mlsreg::io::transform::read_transform;
use mlsreg::io::write_point_cloud;
use mlsreg::report::read_report_json;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mlsreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlsreg")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn malformed_config_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "# tuned\nfine.voxel_edge_m = 1.0\nfine.voxel_edge = 2\n").unwrap();
    let out = mlsreg(&["--config", s(&conf), "synth", "--out", s(&dir.path().join("scene"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:3:") && err.contains("fine.voxel_edge"), "{err}");
    assert!(!dir.path().join("scene").exists());

    std::fs::write(&conf, "eval.per_axis = many\n").unwrap();
    let out = mlsreg(&["--config", s(&conf), "synth", "--out", s(&dir.path().join("scene"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eval.per_axis"));
}

#[test]
fn missing_input_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlsreg(&["preprocess", "--input", s(&dir.path().join("nope.ply")), "--out", s(&dir.path().join("o.ply"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ply"));
}

#[test]
fn box_scene_pipeline_recovers_the_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = BoxSceneSpec {
        spacing_m: 0.1,
        ..BoxSceneSpec::default()
    };
    let layout = box_layout(&spec).unwrap();
    let reference = sample_layout(&layout, 1).unwrap().cloud;
    let scan = sample_layout(&layout, 2).unwrap().cloud;
    let c = scan.centroid().unwrap();
    let local = random_perturbation(&mut ChaCha8Rng::seed_from_u64(4), 8.0, 1.5);
    let perturbation = RigidTransform::from_translation(c)
        .compose(&local)
        .compose(&RigidTransform::from_translation(-c));
    let p = |name: &str| dir.path().join(name);
    write_point_cloud(&apply_transform(&scan, &perturbation), &p("source.ply"), None).unwrap();
    write_point_cloud(&reference, &p("reference.ply"), None).unwrap();
    write_trajectory(&layout.trajectory, &p("trajectory.txt")).unwrap();

    let out = mlsreg(&[
        "pipeline",
        "--source",
        s(&p("source.ply")),
        "--reference",
        s(&p("reference.ply")),
        "--trajectory",
        s(&p("trajectory.txt")),
        "--out",
        s(&p("out")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall mean error"));

    let report = read_report_json(&p("out").join("report.json")).unwrap();
    assert!(report.overall_mean_m.unwrap() < 0.01, "{:?}", report.overall_mean_m);
    for f in &report.fragments {
        let t = read_transform(&p("out").join(format!("fragments/{}/transform.txt", f.id))).unwrap();
        let err = t.compose(&perturbation);
        assert!(err.rotation_angle_deg() < 0.1, "fragment {}: {}", f.id, err.rotation_angle_deg());
        assert!((err.apply(&c) - c).norm() < 0.01);
    }
    for name in ["report.csv", "drift.csv", "trajectory_norm.ply", "fragments.json", "ssc.json"] {
        assert!(p("out").join(name).is_file(), "{name}");
    }
}

#[test]
fn featureless_gap_fails_one_fixed_window_and_is_interpolated() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    // 5 s windows at 4 m/s; the middle window sees only the road.
    std::fs::write(p("run.conf"), "frag.fixed_interval_s = 5\nfine.min_points = 25\n").unwrap();
    let conf = p("run.conf");
    let out = mlsreg(&[
        "--seed", "3", "--config", s(&conf), "synth", "--out", s(&p("scene")),
        "--length-m", "60", "--spacing-m", "0.2", "--clutter", "0", "--gap", "19:41",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let scene = p("scene");
    assert!(read_transform(&scene.join("truth.txt")).unwrap().is_valid(1e-9));

    let out = mlsreg(&[
        "--seed", "3", "--config", s(&conf), "pipeline",
        "--source", s(&scene.join("source.ply")),
        "--reference", s(&scene.join("reference.ply")),
        "--trajectory", s(&scene.join("trajectory.txt")),
        "--out", s(&p("out")),
        "--strategy", "fixed-time",
        "--component", "tx",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = read_drift_csv(&p("out").join("drift.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].valid && rows[2].valid);
    assert!(!rows[1].valid && rows[1].interpolated && rows[1].tx_m.is_some());
    assert!(p("out").join("trajectory_tx.ply").is_file());
    let report = read_report_json(&p("out").join("report.json")).unwrap();
    assert_eq!(report.failed, vec![1]);
    assert!(report.fragments[1].failure.is_some());
    assert!(!p("out").join("fragments/1/transform.txt").exists());
}

#[test]
fn synth_without_perturbation_has_identity_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlsreg(&["synth", "--out", s(dir.path()), "--length-m", "20", "--spacing-m", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let truth = read_transform(&dir.path().join("truth.txt")).unwrap();
    assert!(truth.rotation_angle_deg() < 1e-12 && truth.translation.norm() < 1e-9);
}
