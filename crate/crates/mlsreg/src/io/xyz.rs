//! Whitespace-delimited `x y z [gps_time [classification]]` text.

use std::fmt::Write as _;
use std::path::Path;

use mlsreg_core::{Point3, PointCloud};

use crate::error::{io_err, Error, Result};

pub fn parse_xyz(text: &str, name: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut columns = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("`{t}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if !(3..=5).contains(&values.len()) {
            return Err(err(format!("expected 3 to 5 columns, found {}", values.len())));
        }
        match columns {
            None => columns = Some(values.len()),
            Some(n) if n != values.len() => {
                return Err(err(format!("{} columns after {n}-column lines", values.len())));
            }
            _ => {}
        }
        let mut p = Point3::new(values[0], values[1], values[2]);
        if let Some(&t) = values.get(3) {
            p = p.with_time(t);
        }
        if let Some(&l) = values.get(4) {
            if !(l.fract() == 0.0 && (0.0..=u16::MAX as f64).contains(&l)) {
                return Err(err(format!("class label {l} is not a 16-bit unsigned integer")));
            }
            p = p.with_label(l as u16);
        }
        points.push(p);
    }
    Ok(PointCloud::new(name, points))
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_xyz(&text, &super::ply::stem(path), path)
}

/// Labels can only be stored after a time column, so a labeled cloud
/// without times is rejected rather than silently losing its labels.
pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let times = cloud.has_times();
    let labels = cloud.has_labels();
    if labels && !times {
        return Err(Error::Usage(format!(
            "{}: XYZ text cannot store class labels without gps_time; use PLY",
            path.display()
        )));
    }
    let mut out = String::with_capacity(cloud.len() * 48);
    for p in &cloud.points {
        let v = p.position;
        let _ = write!(out, "{} {} {}", v.x, v.y, v.z);
        if times {
            let _ = write!(out, " {}", p.gps_time.unwrap_or(0.0));
        }
        if labels {
            let _ = write!(out, " {}", p.class_label.unwrap_or(0));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}
