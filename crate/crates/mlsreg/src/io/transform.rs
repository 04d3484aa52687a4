//! Rigid transforms as 4×4 row-major text, one matrix row per line.

use std::path::Path;

use mlsreg_core::RigidTransform;

use crate::error::{io_err, Error, Result};

pub fn format_transform(t: &RigidTransform) -> String {
    let m = t.to_row_major();
    m.chunks(4)
        .map(|r| format!("{} {} {} {}\n", r[0], r[1], r[2], r[3]))
        .collect()
}

pub fn parse_transform(text: &str, path: &Path) -> Result<RigidTransform> {
    let mut values = Vec::with_capacity(16);
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
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("`{t}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != 4 || values.len() == 16 {
            return Err(err("expected four rows of four numbers".into()));
        }
        values.extend(row);
    }
    let m: [f64; 16] = values.try_into().map_err(|v: Vec<f64>| Error::Parse {
        path: path.to_path_buf(),
        line: text.lines().count(),
        message: format!("expected 16 numbers, found {}", v.len()),
    })?;
    Ok(RigidTransform::from_row_major(&m)?)
}

pub fn write_transform(t: &RigidTransform, path: &Path) -> Result<()> {
    std::fs::write(path, format_transform(t)).map_err(io_err(path))
}

pub fn read_transform(path: &Path) -> Result<RigidTransform> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_transform(&text, path)
}
