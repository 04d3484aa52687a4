//! File formats.

pub mod config;
pub mod ply;
pub mod tables;
pub mod trajectory;
pub mod transform;
pub mod xyz;

use std::path::Path;

use mlsreg_core::PointCloud;

use crate::error::{Error, Result};

pub use ply::PlyFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    XyzText,
}

impl CloudFormat {
    /// `.ply` files are written as binary, `.xyz`/`.txt` as text.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ply") => Ok(CloudFormat::PlyBinaryLe),
            Some("xyz") | Some("txt") => Ok(CloudFormat::XyzText),
            _ => Err(Error::Usage(format!(
                "{}: unknown point cloud extension (expected .ply, .xyz or .txt)",
                path.display()
            ))),
        }
    }
}

/// Reads a cloud; PLY files announce their own encoding, so `PlyAscii`
/// and `PlyBinaryLe` both accept either.
pub fn read_point_cloud(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud> {
    match format.map_or_else(|| CloudFormat::from_path(path), Ok)? {
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => ply::read_ply(path),
        CloudFormat::XyzText => xyz::read_xyz(path),
    }
}

pub fn write_point_cloud(cloud: &PointCloud, path: &Path, format: Option<CloudFormat>) -> Result<()> {
    match format.map_or_else(|| CloudFormat::from_path(path), Ok)? {
        CloudFormat::PlyAscii => ply::write_ply(cloud, path, PlyFormat::Ascii),
        CloudFormat::PlyBinaryLe => ply::write_ply(cloud, path, PlyFormat::BinaryLittleEndian),
        CloudFormat::XyzText => xyz::write_xyz(cloud, path),
    }
}
