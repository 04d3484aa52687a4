//! Core algorithms for registering trajectory-attributed mobile laser scans
//! to a reference cloud, fragment by fragment.
//!
//! The crate is `no_std` and only needs an allocator. File formats, clocks,
//! threads and the command line live in the `mlsreg` companion crate.
#![no_std]

extern crate alloc;

pub mod clock;
pub mod coarse;
pub mod config;
pub mod drift;
pub mod error;
pub mod evaluate;
pub mod fine;
pub mod fragment;
pub mod geometry;
pub mod index;
pub mod kabsch;
pub mod normals;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{apply_transform, Aabb, EulerAngles, Point3, PointCloud, RigidTransform, UnitVector3};
pub use index::SpatialIndex;
pub use kabsch::kabsch_fit;
pub use normals::estimate_normals;
pub use trajectory::{Trajectory, TrajectorySample};
