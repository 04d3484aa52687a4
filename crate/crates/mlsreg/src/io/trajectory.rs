//! Trajectory text: one `time x y z` record per line, time ascending.

use std::fmt::Write as _;
use std::path::Path;

use mlsreg_core::{Trajectory, TrajectorySample};
use nalgebra::Vector3;

use crate::error::{io_err, Error, Result};

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut samples: Vec<TrajectorySample> = Vec::new();
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
        let v = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("`{t}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != 4 {
            return Err(err(format!("expected `time x y z`, found {} values", v.len())));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(err("values must be finite".into()));
        }
        if let Some(prev) = samples.last() {
            if !(v[0] > prev.gps_time) {
                return Err(err(format!("time {} does not increase after {}", v[0], prev.gps_time)));
            }
        }
        samples.push(TrajectorySample {
            gps_time: v[0],
            position: Vector3::new(v[1], v[2], v[3]),
        });
    }
    Ok(Trajectory::new(samples)?)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_trajectory(&text, path)
}

pub fn write_trajectory(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let mut out = String::new();
    for s in trajectory.samples() {
        let p = s.position;
        let _ = writeln!(out, "{} {} {} {}", s.gps_time, p.x, p.y, p.z);
    }
    std::fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines_two_samples() {
        let t = parse_trajectory("0 0 0 0\n1 5 0 0\n", Path::new("t")).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.total_length(), 5.0);
    }

    #[test]
    fn descending_time_is_an_error_with_line() {
        match parse_trajectory("# t x y z\n2 0 0 0\n1 1 0 0\n", Path::new("t")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_trajectory("0 0 0\n", Path::new("t")),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
