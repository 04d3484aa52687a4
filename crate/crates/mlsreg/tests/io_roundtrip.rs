use std::path::Path;

use mlsreg::core::drift::{build_drift_series, interpolate_failed};
use mlsreg::core::evaluate::{Axis, PatchDefinition};
use mlsreg::core::{Point3, PointCloud, RigidTransform, Trajectory, TrajectorySample, UnitVector3};
use mlsreg::io::ply::{decode_ply, read_ply, read_ply_table, write_colored_points, write_ply};
use mlsreg::io::tables::{read_drift_csv, read_patches, write_drift_csv, write_patches};
use mlsreg::io::trajectory::{read_trajectory, write_trajectory};
use mlsreg::io::xyz::{read_xyz, write_xyz};
use mlsreg::io::PlyFormat;
use mlsreg::report::{read_report_csv, write_report, FragmentRecord, Pose, RegistrationReport, ReportRow};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|i| {
            let mut p = Point3::new(
                rng.random_range(-1e3..1e3),
                rng.random_range(-1e3..1e3),
                rng.random::<f64>() * 1e-3,
            );
            p.gps_time = Some(1e8 + i as f64 * 1e-4 + rng.random::<f64>() * 1e-5);
            p.class_label = Some(rng.random_range(0..300));
            p.intensity = Some(rng.random());
            p
        })
        .collect();
    let normals = (0..n)
        .map(|i| {
            if i % 97 == 0 {
                None
            } else {
                UnitVector3::new(Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.5))
            }
        })
        .collect();
    PointCloud::new("random", points).with_normals(normals).unwrap()
}

fn same_attributes(a: &PointCloud, b: &PointCloud) {
    assert_eq!(a.points, b.points);
    assert_eq!(a.normals, b.normals);
}

#[test]
fn ply_round_trip_is_bit_identical_in_both_encodings() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(10_000, 1);
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let path = dir.path().join("c.ply");
        write_ply(&cloud, &path, format).unwrap();
        let back = read_ply(&path).unwrap();
        same_attributes(&cloud, &back);
        assert_eq!(read_ply_table(&path).unwrap().format, format);
    }
}

#[test]
fn xyz_round_trip_keeps_positions_times_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.xyz");
    let mut cloud = random_cloud(2_000, 2);
    cloud.normals = None;
    for p in &mut cloud.points {
        p.intensity = None;
    }
    write_xyz(&cloud, &path).unwrap();
    assert_eq!(read_xyz(&path).unwrap().points, cloud.points);
}

#[test]
fn empty_cloud_is_a_valid_zero_vertex_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.ply");
    write_ply(&PointCloud::new("e", vec![]), &path, PlyFormat::Ascii).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("element vertex 0"));
    assert!(read_ply(&path).unwrap().is_empty());
}

#[test]
fn labels_are_written_as_classification() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.ply");
    let cloud = PointCloud::new("l", vec![Point3::new(0.0, 0.0, 0.0).with_label(6)]);
    write_ply(&cloud, &path, PlyFormat::BinaryLittleEndian).unwrap();
    let table = read_ply_table(&path).unwrap();
    assert_eq!(table.column("classification"), Some([6.0].as_slice()));
}

#[test]
fn colored_points_carry_rgb() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ply");
    write_colored_points(&[(Vector3::new(1.0, 2.0, 3.0), [255, 0, 7])], &path, PlyFormat::Ascii).unwrap();
    let t = read_ply_table(&path).unwrap();
    assert_eq!(t.column("red"), Some([255.0].as_slice()));
    assert_eq!(t.column("blue"), Some([7.0].as_slice()));
    assert!(std::fs::read_to_string(&path).unwrap().contains("property uchar green"));
}

#[test]
fn trajectory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = (0..1000)
        .map(|i| TrajectorySample {
            gps_time: 5e5 + i as f64 * 0.1 + rng.random::<f64>() * 1e-3,
            position: Vector3::new(rng.random(), rng.random(), rng.random()),
        })
        .collect();
    let traj = Trajectory::new(samples).unwrap();
    write_trajectory(&traj, &path).unwrap();
    assert_eq!(read_trajectory(&path).unwrap(), traj);
}

fn record(id: usize, rng: &mut ChaCha8Rng) -> FragmentRecord {
    let valid = id % 5 != 3;
    FragmentRecord {
        id,
        points: 1000 + id,
        time_span: [id as f64 * 10.0, id as f64 * 10.0 + 10.0],
        trajectory_length_m: 40.0,
        valid,
        transform: None,
        pose: valid.then(|| Pose {
            rx_deg: rng.random_range(-1.0..1.0),
            ry_deg: rng.random_range(-1.0..1.0),
            rz_deg: rng.random_range(-1.0..1.0),
            tx_m: rng.random_range(-1.0..1.0),
            ty_m: rng.random_range(-1.0..1.0),
            tz_m: rng.random_range(-1.0..1.0),
        }),
        coarse_s: rng.random(),
        fine_s: rng.random(),
        coarse: None,
        fine: None,
        err_x_m: valid.then(|| rng.random::<f64>() * 0.01),
        err_y_m: valid.then(|| rng.random::<f64>() * 0.01),
        err_z_m: (valid && id % 2 == 0).then(|| rng.random::<f64>() * 0.01),
        err_mean_m: valid.then(|| rng.random::<f64>() * 0.01),
        patches: vec![],
        failure: None,
    }
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn report_csv_has_one_row_per_fragment_and_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    write_report(&RegistrationReport::new(0, "ssc", vec![]), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(
        text.trim_end(),
        "id,rx,ry,rz,tx,ty,tz,err_x,err_y,err_z,err_mean,coarse_s,fine_s,valid"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let report = RegistrationReport::new(7, "ssc", (0..22).map(|i| record(i, &mut rng)).collect());
    write_report(&report, dir.path()).unwrap();
    let rows = read_report_csv(&dir.path().join("report.csv")).unwrap();
    assert_eq!(rows.len(), 22);
    for (row, rec) in rows.iter().zip(&report.fragments) {
        let want = ReportRow::from(rec);
        assert_eq!((row.id, row.valid), (want.id, want.valid));
        let pairs = [
            (row.rx, want.rx),
            (row.ry, want.ry),
            (row.rz, want.rz),
            (row.tx, want.tx),
            (row.ty, want.ty),
            (row.tz, want.tz),
            (row.err_x, want.err_x),
            (row.err_y, want.err_y),
            (row.err_z, want.err_z),
            (row.err_mean, want.err_mean),
            (Some(row.coarse_s), Some(want.coarse_s)),
            (Some(row.fine_s), Some(want.fine_s)),
        ];
        assert!(pairs.iter().all(|(a, b)| close(*a, *b)), "{row:?} vs {want:?}");
    }
    let json = mlsreg::report::read_report_json(&dir.path().join("report.json")).unwrap();
    assert_eq!(json, report);
}

#[test]
fn drift_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ts = [
        (0, Some(RigidTransform::identity())),
        (1, None),
        (2, Some(RigidTransform::from_euler_deg(0.01, 0.0, -0.02, Vector3::new(0.002, 0.0, 0.001)))),
        (3, None),
    ];
    let raw = build_drift_series(&ts).unwrap();
    write_drift_csv(&raw, &path).unwrap();
    let rows = read_drift_csv(&path).unwrap();
    assert_eq!(rows[1].tx_m, None);
    assert!(!rows[1].valid && !rows[1].interpolated);

    let filled = interpolate_failed(&raw);
    write_drift_csv(&filled, &path).unwrap();
    let rows = read_drift_csv(&path).unwrap();
    assert!(rows[1].interpolated && !rows[1].valid);
    assert!(close(rows[1].tx_m, Some(filled.entries[1].tx)));
    assert!(close(rows[3].norm_m, Some(filled.entries[2].translation_norm)));
}

#[test]
fn patch_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let patches = vec![
        PatchDefinition::new(Vector3::new(1.0, 2.0, 0.0), UnitVector3::Z, Axis::Z, 0.5, 0.5).unwrap(),
        PatchDefinition::new(
            Vector3::new(-3.25, 8.0, 2.5),
            UnitVector3::new(Vector3::new(0.02, 1.0, 0.0)).unwrap(),
            Axis::Y,
            0.4,
            0.3,
        )
        .unwrap(),
    ];
    write_patches(&patches, &path).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("cx,cy,cz,nx,ny,nz,axis,radius,depth\n"));
    assert_eq!(read_patches(&path).unwrap(), patches);
}

fn valid_ply_bytes() -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.ply");
    write_ply(&random_cloud(20, 9), &path, PlyFormat::BinaryLittleEndian).unwrap();
    std::fs::read(path).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decoder_never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = decode_ply(&bytes, Path::new("fuzz.ply"));
        let mut with_magic = b"ply\nformat ascii 1.0\n".to_vec();
        with_magic.extend_from_slice(&bytes);
        let _ = decode_ply(&with_magic, Path::new("fuzz.ply"));
    }

    #[test]
    fn decoder_never_panics_on_mutated_files(
        edits in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8),
        cut in any::<prop::sample::Index>(),
    ) {
        let mut bytes = valid_ply_bytes();
        for (at, v) in edits {
            let i = at.index(bytes.len());
            bytes[i] = v;
        }
        let _ = decode_ply(&bytes, Path::new("fuzz.ply"));
        let n = cut.index(bytes.len());
        let _ = decode_ply(&bytes[..n], Path::new("fuzz.ply"));
    }
}
