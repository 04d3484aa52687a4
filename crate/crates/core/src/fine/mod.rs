//! Fine registration: GICP restricted to points in planar voxels.

pub mod gicp;
pub mod voxel;

use crate::clock::{timed, Clock};
use crate::config::FineConfig;
use crate::error::Result;
use crate::geometry::{apply_transform, PointCloud, RigidTransform};
use crate::normals::estimate_normals;

pub use gicp::{gicp, gicp_objective, GicpResult, GicpStep};
pub use voxel::{
    classify_planar, merged_voxel_grid, merged_voxel_grid_in, normal_consistency, PlanarParams, PlanarSelection,
    VoxelCell, VoxelGrid,
};

impl From<&FineConfig> for PlanarParams {
    fn from(cfg: &FineConfig) -> Self {
        Self {
            min_points: cfg.min_points,
            angle_deg: cfg.angle_deg,
            ratio: cfg.ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineReport {
    pub source_points: usize,
    pub target_points: usize,
    /// Points passed to GICP; equal to the inputs when planar selection is off.
    pub planar_source_points: usize,
    pub planar_target_points: usize,
    pub cells: usize,
    pub planar_cells: usize,
    pub extraction_s: f64,
    pub gicp_s: f64,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
}

impl FineReport {
    pub fn planar_fraction(&self) -> f64 {
        let all = self.source_points + self.target_points;
        if all == 0 {
            0.0
        } else {
            (self.planar_source_points + self.planar_target_points) as f64 / all as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineResult {
    /// Maps the original source into the target frame (`fine ∘ coarse`).
    pub transform: RigidTransform,
    /// Correction found on top of the coarse transform.
    pub refinement: RigidTransform,
    pub report: FineReport,
    /// Planar-cell members of the coarse-aligned source and the target.
    pub selection: Option<PlanarSelection>,
}

fn ensure_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if cloud.normals.is_some() {
        Ok(cloud.clone())
    } else {
        estimate_normals(cloud, k)
    }
}

/// Normals both clouds need for [`pv_gicp`], estimated where missing.
///
/// Kept separate so callers can exclude the estimate from stage timings.
pub fn prepare_normals(source: &PointCloud, target: &PointCloud, cfg: &FineConfig) -> Result<(PointCloud, PointCloud)> {
    Ok((ensure_normals(source, cfg.normal_k)?, ensure_normals(target, cfg.normal_k)?))
}

/// Refines `coarse` with GICP on the planar parts of both clouds.
///
/// `target` is cropped to the coarse-aligned source's bounds grown by
/// `crop_margin_m`. Normals are estimated when missing; the estimate is not
/// part of the reported timings. With `cfg.planar == false` GICP runs on the
/// full (cropped) clouds.
pub fn pv_gicp<C: Clock + ?Sized>(
    source: &PointCloud,
    target: &PointCloud,
    coarse: &RigidTransform,
    cfg: &FineConfig,
    clock: &C,
) -> Result<FineResult> {
    let moved = apply_transform(source, coarse);
    let cropped = match moved.aabb() {
        Some(b) => target.crop(&b.dilate(cfg.crop_margin_m)),
        None => PointCloud::default(),
    };
    let (src, tgt) = if cfg.planar {
        prepare_normals(&moved, &cropped, cfg)?
    } else {
        (moved, cropped)
    };

    let (selected, extraction_s) = timed(clock, || -> Result<_> {
        if !cfg.planar {
            return Ok(None);
        }
        let mut grid = merged_voxel_grid(&src.positions(), &tgt.positions(), cfg.voxel_edge_m)?;
        let src_normals = src.normals.as_deref().unwrap_or(&[]);
        let tgt_normals = tgt.normals.as_deref().unwrap_or(&[]);
        Ok(Some(classify_planar(&mut grid, src_normals, tgt_normals, &PlanarParams::from(cfg))))
    });
    let selection = selected?;
    let (src_pts, tgt_pts) = match &selection {
        Some(sel) => (
            sel.source.iter().map(|&i| src.points[i].position).collect(),
            sel.target.iter().map(|&i| tgt.points[i].position).collect(),
        ),
        None => (src.positions(), tgt.positions()),
    };
    log::debug!(
        "fine: {} / {} points selected of {} / {}",
        src_pts.len(),
        tgt_pts.len(),
        src.len(),
        tgt.len()
    );
    let (result, gicp_s) = timed(clock, || gicp(&src_pts, &tgt_pts, &RigidTransform::identity(), &cfg.gicp));
    let result = result?;

    Ok(FineResult {
        transform: result.transform.compose(coarse),
        refinement: result.transform,
        report: FineReport {
            source_points: src.len(),
            target_points: tgt.len(),
            planar_source_points: src_pts.len(),
            planar_target_points: tgt_pts.len(),
            cells: selection.as_ref().map_or(0, |s| s.cells),
            planar_cells: selection.as_ref().map_or(0, |s| s.planar),
            extraction_s,
            gicp_s,
            iterations: result.iterations,
            final_cost: result.final_cost,
            converged: result.converged,
        },
        selection,
    })
}

/// [`pv_gicp`] repeated `cfg.passes` times, each round starting from the
/// previous result.
///
/// Planar voxels are selected on the grid of the pose a round starts from;
/// after a poor coarse estimate the two clouds' selections disagree near
/// cell borders and bias the fit slightly. A later round selects again at
/// the refined pose. Timings and iterations are summed over the rounds;
/// the remaining fields describe the last one.
pub fn refine<C: Clock + ?Sized>(
    source: &PointCloud,
    target: &PointCloud,
    coarse: &RigidTransform,
    cfg: &FineConfig,
    clock: &C,
) -> Result<FineResult> {
    let mut result = pv_gicp(source, target, coarse, cfg, clock)?;
    for _ in 1..cfg.passes {
        let next = pv_gicp(source, target, &result.transform, cfg, clock)?;
        let spent = &result.report;
        result = FineResult {
            refinement: next.transform.compose(&coarse.inverse()),
            report: FineReport {
                extraction_s: spent.extraction_s + next.report.extraction_s,
                gicp_s: spent.gicp_s + next.report.gicp_s,
                iterations: spent.iterations + next.report.iterations,
                ..next.report
            },
            ..next
        };
    }
    Ok(result)
}
