//! Patch definitions and drift series as CSV.

use std::path::Path;

use mlsreg_core::drift::{DriftEntry, DriftSeries};
use mlsreg_core::evaluate::{Axis, PatchDefinition};
use mlsreg_core::UnitVector3;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatchRow {
    cx: f64,
    cy: f64,
    cz: f64,
    nx: f64,
    ny: f64,
    nz: f64,
    axis: String,
    radius: f64,
    depth: f64,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_patches(patches: &[PatchDefinition], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    w.write_record(["cx", "cy", "cz", "nx", "ny", "nz", "axis", "radius", "depth"])
        .map_err(csv_err(path))?;
    for p in patches {
        let n = p.normal.into_inner();
        w.serialize(PatchRow {
            cx: p.center.x,
            cy: p.center.y,
            cz: p.center.z,
            nx: n.x,
            ny: n.y,
            nz: n.z,
            axis: p.axis.label().to_string(),
            radius: p.radius_m,
            depth: p.depth_m,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Rows are validated like hand-written definitions: positive sizes and a
/// normal within reach of the named axis.
pub fn read_patches(path: &Path) -> Result<Vec<PatchDefinition>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<PatchRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let axis = Axis::from_label(&row.axis).ok_or_else(|| bad(format!("axis `{}` is not X, Y or Z", row.axis)))?;
        let normal = UnitVector3::new(Vector3::new(row.nx, row.ny, row.nz)).ok_or_else(|| bad("zero normal".into()))?;
        let patch = PatchDefinition::new(Vector3::new(row.cx, row.cy, row.cz), normal, axis, row.radius, row.depth)
            .map_err(|e| bad(e.to_string()))?;
        out.push(patch);
    }
    Ok(out)
}

/// One drift CSV row. Components are empty for failed fragments that were
/// not interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub fragment: usize,
    pub valid: bool,
    pub interpolated: bool,
    pub rx_deg: Option<f64>,
    pub ry_deg: Option<f64>,
    pub rz_deg: Option<f64>,
    pub tx_m: Option<f64>,
    pub ty_m: Option<f64>,
    pub tz_m: Option<f64>,
    pub norm_m: Option<f64>,
}

impl From<&DriftEntry> for DriftRow {
    fn from(e: &DriftEntry) -> Self {
        let v = |x: f64| e.has_value().then_some(x);
        Self {
            fragment: e.id,
            valid: e.valid,
            interpolated: e.interpolated,
            rx_deg: v(e.rx),
            ry_deg: v(e.ry),
            rz_deg: v(e.rz),
            tx_m: v(e.tx),
            ty_m: v(e.ty),
            tz_m: v(e.tz),
            norm_m: v(e.translation_norm),
        }
    }
}

pub fn write_drift_csv(series: &DriftSeries, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "fragment",
        "valid",
        "interpolated",
        "rx_deg",
        "ry_deg",
        "rz_deg",
        "tx_m",
        "ty_m",
        "tz_m",
        "norm_m",
    ])
    .map_err(csv_err(path))?;
    for e in &series.entries {
        w.serialize(DriftRow::from(e)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_drift_csv(path: &Path) -> Result<Vec<DriftRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_patch_rows_name_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "cx,cy,cz,nx,ny,nz,axis,radius,depth\n0,0,0,0,0,1,Z,0.5,0.5\n0,0,0,1,0,0,Z,0.5,0.5\n").unwrap();
        match read_patches(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
