//! Feature-based initial alignment of a fragment to the reference cloud.
//!
//! ISS keypoints → FPFH descriptors → nearest-descriptor matching →
//! pairwise-rigidity filtering → RANSAC with a Kabsch refit.

pub mod fpfh;
pub mod gror;
pub mod iss;
pub mod ransac;

use alloc::format;
use alloc::vec::Vec;

use crate::config::CoarseConfig;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::index::SpatialIndex;
use crate::normals::estimate_normals;

pub use fpfh::{compute_fpfh, FpfhDescriptor};
pub use gror::{gror_filter, match_features, CompatibilityGraph, Correspondence};
pub use iss::{detect_iss_keypoints, estimate_resolution, IssParams, Keypoint};
pub use ransac::{estimate_coarse_transform, RansacParams, RansacResult};

/// Outcome of [`coarse_register`] with per-step counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseResult {
    /// Maps source coordinates into the target frame.
    pub transform: RigidTransform,
    pub resolution_m: f64,
    pub source_keypoints: usize,
    pub target_keypoints: usize,
    pub correspondences: usize,
    pub filtered: usize,
    pub inliers: usize,
    pub iterations: usize,
}

/// Reference points within the fragment's bounding box grown by `margin_m`.
pub fn crop_reference(reference: &PointCloud, fragment: &PointCloud, margin_m: f64) -> PointCloud {
    match fragment.aabb() {
        Some(bounds) => reference.crop(&bounds.dilate(margin_m)),
        None => PointCloud::new(reference.name.clone(), Vec::new()),
    }
}

fn with_oriented_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let mut out = if cloud.normals.is_some() {
        cloud.clone()
    } else {
        estimate_normals(cloud, k)?
    };
    fpfh::orient_dominant_positive(&mut out);
    Ok(out)
}

/// Estimates the transform taking `source` onto `target`.
///
/// Normals are estimated when absent. `stream` separates the RANSAC samples
/// of different fragments under the same `seed`.
pub fn coarse_register(
    source: &PointCloud,
    target: &PointCloud,
    cfg: &CoarseConfig,
    seed: u64,
    stream: u64,
) -> Result<CoarseResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::CoarseFailure(format!(
            "clouds too small ({} source, {} target points)",
            source.len(),
            target.len()
        )));
    }
    let src = with_oriented_normals(source, cfg.normal_k)?;
    let tgt = with_oriented_normals(target, cfg.normal_k)?;
    let src_index = SpatialIndex::new(&src);
    let tgt_index = SpatialIndex::new(&tgt);

    let resolution = if cfg.iss_resolution_m > 0.0 {
        cfg.iss_resolution_m
    } else {
        estimate_resolution(&src, &src_index)
    };
    if !(resolution > 0.0) {
        return Err(Error::CoarseFailure("point spacing is zero".into()));
    }
    let iss = IssParams {
        salient_radius_m: cfg.iss_salient_mult * resolution,
        nonmax_radius_m: cfg.iss_nonmax_mult * resolution,
        gamma21: cfg.iss_gamma21,
        gamma32: cfg.iss_gamma32,
        min_neighbors: cfg.iss_min_neighbors,
        min_salience: cfg.iss_min_salience,
        max_keypoints: cfg.iss_max_keypoints,
    };
    let src_kp: Vec<usize> = detect_iss_keypoints(&src, &src_index, &iss).iter().map(|k| k.index).collect();
    let tgt_kp: Vec<usize> = detect_iss_keypoints(&tgt, &tgt_index, &iss).iter().map(|k| k.index).collect();
    log::debug!("coarse: resolution {resolution:.4} m, keypoints {} / {}", src_kp.len(), tgt_kp.len());
    if src_kp.len() < 3 || tgt_kp.len() < 3 {
        return Err(Error::CoarseFailure(format!(
            "too few keypoints ({} source, {} target)",
            src_kp.len(),
            tgt_kp.len()
        )));
    }

    let src_desc = compute_fpfh(&src, &src_index, &src_kp, cfg.fpfh_radius_m)?;
    let tgt_desc = compute_fpfh(&tgt, &tgt_index, &tgt_kp, cfg.fpfh_radius_m)?;
    let matches = match_features(&src_desc, &tgt_desc);
    let src_pos: Vec<_> = src_kp.iter().map(|&i| src.points[i].position).collect();
    let tgt_pos: Vec<_> = tgt_kp.iter().map(|&i| tgt.points[i].position).collect();
    let (filtered, _) = gror_filter(&matches, &src_pos, &tgt_pos, cfg.gror_tau_m, cfg.gror_k, cfg.gror_weighted);
    let pairs: Vec<_> = filtered
        .iter()
        .map(|c| (src_pos[c.source], tgt_pos[c.target]))
        .collect();
    let ransac = estimate_coarse_transform(
        &pairs,
        &RansacParams {
            inlier_dist_m: cfg.ransac_inlier_m,
            max_iterations: cfg.ransac_max_iterations,
            confidence: cfg.ransac_confidence,
            min_inliers: cfg.min_inliers,
            seed,
            stream,
        },
    )?;
    Ok(CoarseResult {
        transform: ransac.transform,
        resolution_m: resolution,
        source_keypoints: src_kp.len(),
        target_keypoints: tgt_kp.len(),
        correspondences: matches.len(),
        filtered: filtered.len(),
        inliers: ransac.inliers.len(),
        iterations: ransac.iterations,
    })
}
