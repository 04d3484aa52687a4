//! Stage wiring shared by the one-shot runner and the per-stage commands.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::clock::{timed, Clock};
use crate::coarse::{coarse_register, crop_reference, CoarseResult};
use crate::config::{FragmentStrategy, PipelineConfig};
use crate::drift::{build_drift_series, interpolate_failed, DriftSeries};
use crate::error::{Error, Result};
use crate::evaluate::{auto_generate_patches, evaluate_fragment, AxisErrorSummary, PatchDefinition};
use crate::fine::{refine, FineReport, PlanarParams};
use crate::fragment::{fixed_fragmentation, initial_fragmentation, ssc_validate, Fragment, Slicing, SscOutcome, SscParams};
use crate::geometry::{apply_transform, PointCloud, RigidTransform};
use crate::normals::estimate_normals;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preprocess,
    Fragment,
    Coarse,
    Fine,
    Evaluate,
    Drift,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Fragment => "fragment",
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
            Stage::Evaluate => "evaluate",
            Stage::Drift => "drift",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

/// Fragments to register, with the validation record in SSC mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentPlan {
    pub fragments: Vec<Fragment>,
    pub ssc: Option<SscOutcome>,
}

/// Cuts a time-ordered cloud according to `cfg.frag.strategy`.
pub fn plan_fragments(cloud: &PointCloud, trajectory: &Trajectory, cfg: &PipelineConfig) -> Result<FragmentPlan> {
    let f = &cfg.frag;
    match f.strategy {
        FragmentStrategy::Ssc => {
            let initial = initial_fragmentation(cloud, Some(trajectory), Slicing::from_config(f))?;
            let ssc = ssc_validate(cloud, &initial, trajectory, &SscParams::from(f))?;
            Ok(FragmentPlan {
                fragments: ssc.fragments.clone(),
                ssc: Some(ssc),
            })
        }
        FragmentStrategy::FixedTime => Ok(FragmentPlan {
            fragments: fixed_fragmentation(cloud, Some(trajectory), Slicing::Temporal { interval_s: f.fixed_interval_s })?,
            ssc: None,
        }),
        FragmentStrategy::FixedLength => Ok(FragmentPlan {
            fragments: fixed_fragmentation(cloud, Some(trajectory), Slicing::Spatial { length_m: f.length_m })?,
            ssc: None,
        }),
    }
}

/// Everything known about one fragment after registration and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentRegistration {
    pub id: usize,
    pub points: usize,
    pub coarse: Option<CoarseResult>,
    pub fine: Option<FineReport>,
    /// Maps the fragment into the reference frame.
    pub transform: Option<RigidTransform>,
    pub coarse_s: f64,
    pub fine_s: f64,
    pub evaluation: Option<AxisErrorSummary>,
    pub failure: Option<StageFailure>,
}

impl FragmentRegistration {
    fn failed(id: usize, points: usize, stage: Stage, err: &Error) -> Self {
        Self {
            id,
            points,
            coarse: None,
            fine: None,
            transform: None,
            coarse_s: 0.0,
            fine_s: 0.0,
            evaluation: None,
            failure: Some(StageFailure {
                stage,
                message: err.to_string(),
            }),
        }
    }

    /// Registration succeeded; evaluation may still have failed.
    pub fn is_valid(&self) -> bool {
        self.transform.is_some()
    }
}

/// Coarse stage of one fragment; `stream` keeps RANSAC draws of different
/// fragments independent.
pub fn coarse_stage<C: Clock + ?Sized>(
    fragment: &PointCloud,
    reference: &PointCloud,
    cfg: &PipelineConfig,
    stream: u64,
    clock: &C,
) -> (Result<CoarseResult>, f64) {
    timed(clock, || {
        let cropped = crop_reference(reference, fragment, cfg.coarse.crop_margin_m);
        coarse_register(fragment, &cropped, &cfg.coarse, cfg.run.seed, stream)
    })
}

/// Patches for a registered fragment, generated on the reference inside the
/// fragment's bounds.
pub fn fragment_patches(reference: &PointCloud, registered: &PointCloud, cfg: &PipelineConfig) -> Result<Vec<PatchDefinition>> {
    let Some(bounds) = registered.aabb() else {
        return Ok(Vec::new());
    };
    // One cell of margin so cells straddling the border still fill up.
    let local = reference.crop(&bounds.dilate(cfg.fine.voxel_edge_m));
    if local.len() <= cfg.fine.normal_k {
        return Ok(Vec::new());
    }
    let local = estimate_normals(&local, cfg.fine.normal_k)?;
    auto_generate_patches(
        &local,
        Some(&bounds),
        cfg.eval.per_axis,
        &PlanarParams::from(&cfg.fine),
        cfg.fine.voxel_edge_m,
        &cfg.eval,
    )
}

/// Evaluation of a registered fragment against the reference.
pub fn evaluate_stage(
    reference: &PointCloud,
    registered: &PointCloud,
    patches: &[PatchDefinition],
    cfg: &PipelineConfig,
) -> AxisErrorSummary {
    evaluate_fragment(reference, registered, patches, &cfg.eval)
}

/// Coarse, fine and evaluation stages of one fragment. Failures are
/// recorded, not returned. Without `patches`, they are generated per
/// fragment with [`fragment_patches`].
pub fn register_fragment<C: Clock + ?Sized>(
    id: usize,
    fragment: &PointCloud,
    reference: &PointCloud,
    cfg: &PipelineConfig,
    patches: Option<&[PatchDefinition]>,
    clock: &C,
) -> FragmentRegistration {
    let n = fragment.len();
    let (coarse, coarse_s) = coarse_stage(fragment, reference, cfg, id as u64, clock);
    let coarse = match coarse {
        Ok(c) => c,
        Err(e) => {
            log::warn!("fragment {id}: coarse stage failed: {e}");
            return FragmentRegistration {
                coarse_s,
                ..FragmentRegistration::failed(id, n, Stage::Coarse, &e)
            };
        }
    };
    let fine = match refine(fragment, reference, &coarse.transform, &cfg.fine, clock) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("fragment {id}: fine stage failed: {e}");
            return FragmentRegistration {
                coarse: Some(coarse),
                coarse_s,
                ..FragmentRegistration::failed(id, n, Stage::Fine, &e)
            };
        }
    };
    let fine_s = fine.report.extraction_s + fine.report.gicp_s;
    log::info!(
        "fragment {id}: planar extraction {:.3} s, gicp {:.3} s",
        fine.report.extraction_s,
        fine.report.gicp_s
    );
    let registered = apply_transform(fragment, &fine.transform);
    let patches = match patches {
        Some(p) => Ok(p.to_vec()),
        None => fragment_patches(reference, &registered, cfg),
    };
    let (evaluation, failure) = match patches {
        Ok(patches) => (Some(evaluate_stage(reference, &registered, &patches, cfg)), None),
        Err(e) => {
            log::warn!("fragment {id}: evaluation failed: {e}");
            (
                None,
                Some(StageFailure {
                    stage: Stage::Evaluate,
                    message: e.to_string(),
                }),
            )
        }
    };
    FragmentRegistration {
        id,
        points: n,
        coarse: Some(coarse),
        fine: Some(fine.report),
        transform: Some(fine.transform),
        coarse_s,
        fine_s,
        evaluation,
        failure,
    }
}

/// Drift series of the registered fragments, gaps filled when configured.
pub fn drift_stage(results: &[FragmentRegistration], cfg: &PipelineConfig) -> Result<DriftSeries> {
    let input: Vec<(usize, Option<RigidTransform>)> = results.iter().map(|r| (r.id, r.transform)).collect();
    let series = build_drift_series(&input)?;
    Ok(if cfg.drift.interpolate {
        interpolate_failed(&series)
    } else {
        series
    })
}
