//! Registration report: a JSON document plus a flat per-fragment CSV table.

use std::path::Path;

use mlsreg_core::coarse::CoarseResult;
use mlsreg_core::evaluate::{AxisErrorSummary, PatchOutcome};
use mlsreg_core::fine::FineReport;
use mlsreg_core::fragment::Fragment;
use mlsreg_core::pipeline::{FragmentRegistration, StageFailure};
use mlsreg_core::RigidTransform;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseRecord {
    pub transform: [f64; 16],
    pub resolution_m: f64,
    pub source_keypoints: usize,
    pub target_keypoints: usize,
    pub correspondences: usize,
    pub filtered: usize,
    pub inliers: usize,
    pub iterations: usize,
}

impl From<&CoarseResult> for CoarseRecord {
    fn from(c: &CoarseResult) -> Self {
        Self {
            transform: c.transform.to_row_major(),
            resolution_m: c.resolution_m,
            source_keypoints: c.source_keypoints,
            target_keypoints: c.target_keypoints,
            correspondences: c.correspondences,
            filtered: c.filtered,
            inliers: c.inliers,
            iterations: c.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineRecord {
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub cells: usize,
    pub planar_cells: usize,
    pub source_points: usize,
    pub target_points: usize,
    pub planar_source_points: usize,
    pub planar_target_points: usize,
    pub extraction_s: f64,
    pub gicp_s: f64,
}

impl From<&FineReport> for FineRecord {
    fn from(f: &FineReport) -> Self {
        Self {
            iterations: f.iterations,
            converged: f.converged,
            final_cost: f.final_cost,
            cells: f.cells,
            planar_cells: f.planar_cells,
            source_points: f.source_points,
            target_points: f.target_points,
            planar_source_points: f.planar_source_points,
            planar_target_points: f.planar_target_points,
            extraction_s: f.extraction_s,
            gicp_s: f.gicp_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub axis: char,
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub distance_m: Option<f64>,
    pub reference_members: usize,
    pub registered_members: usize,
}

impl From<&PatchOutcome> for PatchRecord {
    fn from(o: &PatchOutcome) -> Self {
        let n = o.patch.normal.into_inner();
        Self {
            axis: o.patch.axis.label(),
            center: o.patch.center.into(),
            normal: n.into(),
            distance_m: o.distance,
            reference_members: o.reference_members,
            registered_members: o.registered_members,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: String,
    pub message: String,
}

impl From<&StageFailure> for FailureRecord {
    fn from(f: &StageFailure) -> Self {
        Self {
            stage: f.stage.name().into(),
            message: f.message.clone(),
        }
    }
}

/// Euler angles (degrees, `R = Rz·Ry·Rx`) and translation of a transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rx_deg: f64,
    pub ry_deg: f64,
    pub rz_deg: f64,
    pub tx_m: f64,
    pub ty_m: f64,
    pub tz_m: f64,
}

impl From<&RigidTransform> for Pose {
    fn from(t: &RigidTransform) -> Self {
        let e = t.to_euler();
        Self {
            rx_deg: e.rx,
            ry_deg: e.ry,
            rz_deg: e.rz,
            tx_m: t.translation.x,
            ty_m: t.translation.y,
            tz_m: t.translation.z,
        }
    }
}

/// Everything recorded for one fragment. Stage commands fill it in
/// incrementally; the one-shot pipeline writes it in one go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentRecord {
    pub id: usize,
    pub points: usize,
    pub time_span: [f64; 2],
    pub trajectory_length_m: f64,
    pub valid: bool,
    /// Maps the fragment into the reference frame, 4×4 row-major.
    pub transform: Option<[f64; 16]>,
    pub pose: Option<Pose>,
    pub coarse_s: f64,
    pub fine_s: f64,
    pub coarse: Option<CoarseRecord>,
    pub fine: Option<FineRecord>,
    pub err_x_m: Option<f64>,
    pub err_y_m: Option<f64>,
    pub err_z_m: Option<f64>,
    pub err_mean_m: Option<f64>,
    pub patches: Vec<PatchRecord>,
    pub failure: Option<FailureRecord>,
}

impl FragmentRecord {
    pub fn new(fragment: &Fragment) -> Self {
        Self {
            id: fragment.id,
            points: fragment.len(),
            time_span: [fragment.time_span.0, fragment.time_span.1],
            trajectory_length_m: fragment.trajectory_length,
            valid: false,
            transform: None,
            pose: None,
            coarse_s: 0.0,
            fine_s: 0.0,
            coarse: None,
            fine: None,
            err_x_m: None,
            err_y_m: None,
            err_z_m: None,
            err_mean_m: None,
            patches: Vec::new(),
            failure: None,
        }
    }

    pub fn set_transform(&mut self, t: Option<&RigidTransform>) {
        self.transform = t.map(|t| t.to_row_major());
        self.pose = t.map(Pose::from);
        self.valid = t.is_some();
    }

    pub fn rigid_transform(&self) -> Option<RigidTransform> {
        self.transform.and_then(|m| RigidTransform::from_row_major(&m).ok())
    }

    pub fn set_evaluation(&mut self, e: &AxisErrorSummary) {
        [self.err_x_m, self.err_y_m, self.err_z_m] = [0, 1, 2].map(|k| e.axes[k].mean_m);
        self.err_mean_m = e.fragment_mean_m;
        self.patches = e.patches.iter().map(PatchRecord::from).collect();
    }

    pub fn from_registration(fragment: &Fragment, r: &FragmentRegistration) -> Self {
        let mut rec = Self::new(fragment);
        rec.set_transform(r.transform.as_ref());
        rec.coarse_s = r.coarse_s;
        rec.fine_s = r.fine_s;
        rec.coarse = r.coarse.as_ref().map(CoarseRecord::from);
        rec.fine = r.fine.as_ref().map(FineRecord::from);
        if let Some(e) = &r.evaluation {
            rec.set_evaluation(e);
        }
        rec.failure = r.failure.as_ref().map(FailureRecord::from);
        rec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub seed: u64,
    pub strategy: String,
    pub fragments: Vec<FragmentRecord>,
    /// Mean over fragments of the per-fragment mean |M3C2| error.
    pub overall_mean_m: Option<f64>,
    pub failed: Vec<usize>,
}

impl RegistrationReport {
    pub fn new(seed: u64, strategy: &str, fragments: Vec<FragmentRecord>) -> Self {
        let means: Vec<f64> = fragments.iter().filter_map(|f| f.err_mean_m).collect();
        let overall_mean_m = (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64);
        let failed = fragments.iter().filter(|f| !f.valid).map(|f| f.id).collect();
        Self {
            seed,
            strategy: strategy.into(),
            fragments,
            overall_mean_m,
            failed,
        }
    }

    /// Defined per-patch distances over all fragments.
    pub fn patch_distances(&self) -> Vec<f64> {
        self.fragments
            .iter()
            .flat_map(|f| f.patches.iter().filter_map(|p| p.distance_m))
            .collect()
    }
}

/// One CSV row. Angles in degrees, translations and errors in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: usize,
    pub rx: Option<f64>,
    pub ry: Option<f64>,
    pub rz: Option<f64>,
    pub tx: Option<f64>,
    pub ty: Option<f64>,
    pub tz: Option<f64>,
    pub err_x: Option<f64>,
    pub err_y: Option<f64>,
    pub err_z: Option<f64>,
    pub err_mean: Option<f64>,
    pub coarse_s: f64,
    pub fine_s: f64,
    pub valid: bool,
}

impl From<&FragmentRecord> for ReportRow {
    fn from(f: &FragmentRecord) -> Self {
        let p = f.pose;
        Self {
            id: f.id,
            rx: p.map(|p| p.rx_deg),
            ry: p.map(|p| p.ry_deg),
            rz: p.map(|p| p.rz_deg),
            tx: p.map(|p| p.tx_m),
            ty: p.map(|p| p.ty_m),
            tz: p.map(|p| p.tz_m),
            err_x: f.err_x_m,
            err_y: f.err_y_m,
            err_z: f.err_z_m,
            err_mean: f.err_mean_m,
            coarse_s: f.coarse_s,
            fine_s: f.fine_s,
            valid: f.valid,
        }
    }
}

pub const REPORT_CSV_HEADER: [&str; 14] = [
    "id", "rx", "ry", "rz", "tx", "ty", "tz", "err_x", "err_y", "err_z", "err_mean", "coarse_s", "fine_s", "valid",
];

pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    // Written by hand so an empty table still has its header.
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

pub fn write_report_json(report: &RegistrationReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report_json(path: &Path) -> Result<RegistrationReport> {
    read_json(path)
}

/// `<dir>/report.json` and `<dir>/report.csv`.
pub fn write_report(report: &RegistrationReport, dir: &Path) -> Result<()> {
    write_report_json(report, &dir.join("report.json"))?;
    let rows: Vec<ReportRow> = report.fragments.iter().map(ReportRow::from).collect();
    write_report_csv(&rows, &dir.join("report.csv"))
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
