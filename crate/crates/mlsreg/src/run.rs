//! Stage runners over an output directory, and the one-shot pipeline.
//!
//! The stage functions and [`run_pipeline`] call the same core operations
//! with the same inputs; fragments and transforms pass through files
//! losslessly, so both paths produce the same transforms.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mlsreg_core::clock::Clock;
use mlsreg_core::config::PipelineConfig;
use mlsreg_core::drift::{build_drift_series, color_trajectory, interpolate_failed, DriftComponent, DriftSeries};
use mlsreg_core::evaluate::PatchDefinition;
use mlsreg_core::fine::refine;
use mlsreg_core::fragment::Fragment;
use mlsreg_core::pipeline::{
    coarse_stage, evaluate_stage, fragment_patches, plan_fragments, register_fragment, FragmentPlan, Stage,
};
use mlsreg_core::preprocess::preprocess;
use mlsreg_core::{apply_transform, PointCloud, RigidTransform, Trajectory};

use crate::artifacts::{strategy_name, write_plan, write_ssc, PlanRecord, PlannedFragment, Workspace};
use crate::error::Result;
use crate::io::ply::{read_ply, write_colored_points, write_ply};
use crate::io::tables::write_drift_csv;
use crate::io::transform::{read_transform, write_transform};
use crate::io::PlyFormat;
use crate::report::{write_report, CoarseRecord, FailureRecord, FineRecord, FragmentRecord, RegistrationReport};

/// `f` over `items` on at most `jobs` threads; output order follows input.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn failure(stage: Stage, err: &dyn std::fmt::Display) -> Option<FailureRecord> {
    Some(FailureRecord {
        stage: stage.name().into(),
        message: err.to_string(),
    })
}

/// Cuts `cloud` and writes one `fragment.ply` per fragment plus the plan.
/// Artifacts of later stages from an earlier run are removed.
pub fn fragment_stage(cloud: &PointCloud, trajectory: &Trajectory, cfg: &PipelineConfig, ws: &Workspace) -> Result<FragmentPlan> {
    let plan = plan_fragments(cloud, trajectory, cfg)?;
    for f in &plan.fragments {
        ws.ensure_fragment_dir(f.id)?;
        write_ply(&cloud.slice(f.point_range.clone()), &ws.fragment_cloud(f.id), PlyFormat::BinaryLittleEndian)?;
        for stale in [ws.coarse_transform(f.id), ws.transform(f.id), ws.registered_cloud(f.id)] {
            ws.remove(&stale)?;
        }
        ws.write_record(&FragmentRecord::new(f))?;
    }
    write_plan(
        ws,
        &PlanRecord {
            strategy: strategy_name(cfg.frag.strategy).into(),
            source_points: cloud.len(),
            fragments: plan.fragments.iter().map(PlannedFragment::from).collect(),
        },
    )?;
    match &plan.ssc {
        Some(ssc) => write_ssc(ws, ssc)?,
        None => ws.remove(&ws.ssc_path())?,
    }
    log::info!("{} fragments ({})", plan.fragments.len(), strategy_name(cfg.frag.strategy));
    Ok(plan)
}

fn planned(ws: &Workspace) -> Result<Vec<Fragment>> {
    ws.read_plan()?.fragments()
}

/// Coarse registration of every planned fragment; writes `coarse.txt`.
pub fn coarse_in_workspace<C: Clock + Sync + ?Sized>(
    ws: &Workspace,
    reference: &PointCloud,
    cfg: &PipelineConfig,
    clock: &C,
) -> Result<Vec<FragmentRecord>> {
    let fragments = planned(ws)?;
    par_map(&fragments, cfg.run.jobs, |f| -> Result<FragmentRecord> {
        let cloud = read_ply(&ws.fragment_cloud(f.id))?;
        let mut rec = FragmentRecord::new(f);
        let (coarse, seconds) = coarse_stage(&cloud, reference, cfg, f.id as u64, clock);
        rec.coarse_s = seconds;
        ws.remove(&ws.transform(f.id))?;
        ws.remove(&ws.registered_cloud(f.id))?;
        match coarse {
            Ok(c) => {
                write_transform(&c.transform, &ws.coarse_transform(f.id))?;
                rec.coarse = Some(CoarseRecord::from(&c));
            }
            Err(e) => {
                log::warn!("fragment {}: coarse stage failed: {e}", f.id);
                ws.remove(&ws.coarse_transform(f.id))?;
                rec.failure = failure(Stage::Coarse, &e);
            }
        }
        ws.write_record(&rec)?;
        Ok(rec)
    })
    .into_iter()
    .collect()
}

/// PV-GICP from each `coarse.txt`; writes `transform.txt` and
/// `registered.ply`. Fragments whose coarse stage failed are passed over.
pub fn fine_in_workspace<C: Clock + Sync + ?Sized>(
    ws: &Workspace,
    reference: &PointCloud,
    cfg: &PipelineConfig,
    clock: &C,
) -> Result<Vec<FragmentRecord>> {
    let fragments = planned(ws)?;
    par_map(&fragments, cfg.run.jobs, |f| -> Result<FragmentRecord> {
        let mut rec = ws.read_record(f.id)?;
        if rec.coarse.is_none() {
            return Ok(rec);
        }
        let cloud = read_ply(&ws.fragment_cloud(f.id))?;
        let coarse = read_transform(&ws.coarse_transform(f.id))?;
        rec.set_transform(None);
        rec.failure = None;
        match refine(&cloud, reference, &coarse, &cfg.fine, clock) {
            Ok(fine) => {
                log::info!(
                    "fragment {}: planar extraction {:.3} s, gicp {:.3} s",
                    f.id,
                    fine.report.extraction_s,
                    fine.report.gicp_s
                );
                rec.fine_s = fine.report.extraction_s + fine.report.gicp_s;
                rec.fine = Some(FineRecord::from(&fine.report));
                rec.set_transform(Some(&fine.transform));
                write_transform(&fine.transform, &ws.transform(f.id))?;
                write_ply(
                    &apply_transform(&cloud, &fine.transform),
                    &ws.registered_cloud(f.id),
                    PlyFormat::BinaryLittleEndian,
                )?;
            }
            Err(e) => {
                log::warn!("fragment {}: fine stage failed: {e}", f.id);
                rec.fine = None;
                rec.failure = failure(Stage::Fine, &e);
                ws.remove(&ws.transform(f.id))?;
                ws.remove(&ws.registered_cloud(f.id))?;
            }
        }
        ws.write_record(&rec)?;
        Ok(rec)
    })
    .into_iter()
    .collect()
}

/// Evaluates every registered fragment and writes `report.json` and
/// `report.csv`. Without `patches`, patches are generated per fragment.
pub fn evaluate_in_workspace(
    ws: &Workspace,
    reference: &PointCloud,
    cfg: &PipelineConfig,
    patches: Option<&[PatchDefinition]>,
) -> Result<RegistrationReport> {
    let plan = ws.read_plan()?;
    let fragments = plan.fragments()?;
    let records = par_map(&fragments, cfg.run.jobs, |f| -> Result<FragmentRecord> {
        let mut rec = ws.read_record(f.id)?;
        let Some(t) = rec.transform.is_some().then(|| read_transform(&ws.transform(f.id))).transpose()? else {
            return Ok(rec);
        };
        let registered = apply_transform(&read_ply(&ws.fragment_cloud(f.id))?, &t);
        let chosen = match patches {
            Some(p) => Ok(p.to_vec()),
            None => fragment_patches(reference, &registered, cfg),
        };
        match chosen {
            Ok(p) => {
                rec.set_evaluation(&evaluate_stage(reference, &registered, &p, cfg));
                rec.failure = None;
            }
            Err(e) => {
                log::warn!("fragment {}: evaluation failed: {e}", f.id);
                rec.failure = failure(Stage::Evaluate, &e);
            }
        }
        ws.write_record(&rec)?;
        Ok(rec)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let report = RegistrationReport::new(cfg.run.seed, &plan.strategy, records);
    write_report(&report, ws.root())?;
    Ok(report)
}

/// Drift series from per-fragment transforms (`None` = failed).
pub fn drift_series(transforms: &[(usize, Option<RigidTransform>)], cfg: &PipelineConfig) -> Result<DriftSeries> {
    let series = build_drift_series(transforms)?;
    Ok(if cfg.drift.interpolate {
        interpolate_failed(&series)
    } else {
        series
    })
}

/// Writes `drift.csv` and the trajectory colored by `component`.
pub fn write_drift(
    ws: &Workspace,
    series: &DriftSeries,
    trajectory: &Trajectory,
    spans: &[(f64, f64)],
    component: DriftComponent,
) -> Result<()> {
    write_drift_csv(series, &ws.drift_csv())?;
    let colored = color_trajectory(series, trajectory, spans, component)?;
    write_colored_points(&colored, &ws.colored_trajectory(component.name()), PlyFormat::BinaryLittleEndian)
}

/// Drift stage over the records of a workspace.
pub fn drift_in_workspace(
    ws: &Workspace,
    trajectory: &Trajectory,
    cfg: &PipelineConfig,
    component: DriftComponent,
) -> Result<DriftSeries> {
    let fragments = planned(ws)?;
    let mut transforms = Vec::with_capacity(fragments.len());
    for f in &fragments {
        let rec = ws.read_record(f.id)?;
        let t = if rec.valid {
            Some(read_transform(&ws.transform(f.id))?)
        } else {
            None
        };
        transforms.push((f.id, t));
    }
    let series = drift_series(&transforms, cfg)?;
    let spans: Vec<(f64, f64)> = fragments.iter().map(|f| f.time_span).collect();
    write_drift(ws, &series, trajectory, &spans, component)?;
    Ok(series)
}

/// Result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub plan: FragmentPlan,
    pub report: RegistrationReport,
    /// `None` when no fragment registered.
    pub drift: Option<DriftSeries>,
}

impl PipelineRun {
    pub fn all_registered(&self) -> bool {
        self.report.failed.is_empty()
    }
}

/// Inputs of the one-shot pipeline, before preprocessing.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub source: PointCloud,
    pub reference: PointCloud,
    pub trajectory: Trajectory,
}

/// Preprocess → fragment → coarse → fine → evaluate → drift, writing every
/// artifact of the stage commands into `ws`.
pub fn run_pipeline<C: Clock + Sync + ?Sized>(
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
    ws: &Workspace,
    patches: Option<&[PatchDefinition]>,
    component: DriftComponent,
    clock: &C,
) -> Result<PipelineRun> {
    let source = preprocess(&inputs.source, &cfg.pre)?;
    let reference = preprocess(&inputs.reference, &cfg.pre)?;
    log::info!("preprocessed: source {} points, reference {} points", source.len(), reference.len());
    let plan = fragment_stage(&source, &inputs.trajectory, cfg, ws)?;

    let records = par_map(&plan.fragments, cfg.run.jobs, |f| -> Result<FragmentRecord> {
        let cloud = source.slice(f.point_range.clone());
        let r = register_fragment(f.id, &cloud, &reference, cfg, patches, clock);
        if let Some(c) = &r.coarse {
            write_transform(&c.transform, &ws.coarse_transform(f.id))?;
        }
        if let Some(t) = &r.transform {
            write_transform(t, &ws.transform(f.id))?;
            write_ply(&apply_transform(&cloud, t), &ws.registered_cloud(f.id), PlyFormat::BinaryLittleEndian)?;
        }
        let rec = FragmentRecord::from_registration(f, &r);
        ws.write_record(&rec)?;
        Ok(rec)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let report = RegistrationReport::new(cfg.run.seed, strategy_name(cfg.frag.strategy), records);
    write_report(&report, ws.root())?;
    for f in &report.fragments {
        if let Some(fail) = &f.failure {
            log::warn!("fragment {}: {} stage: {}", f.id, fail.stage, fail.message);
        }
    }

    let transforms: Vec<(usize, Option<RigidTransform>)> =
        report.fragments.iter().map(|f| (f.id, f.rigid_transform())).collect();
    let drift = if transforms.iter().any(|(_, t)| t.is_some()) {
        let series = drift_series(&transforms, cfg)?;
        let spans: Vec<(f64, f64)> = plan.fragments.iter().map(|f| f.time_span).collect();
        write_drift(ws, &series, &inputs.trajectory, &spans, component)?;
        Some(series)
    } else {
        log::warn!("no fragment registered; drift outputs skipped");
        None
    };
    Ok(PipelineRun { plan, report, drift })
}
