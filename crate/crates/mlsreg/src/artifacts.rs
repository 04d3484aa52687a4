//! Output directory layout and the records persisted between stages.
//!
//! ```text
//! out/
//!   fragments.json            fragment plan
//!   ssc.json                  validation history (SSC strategy only)
//!   fragments/<id>/
//!     fragment.ply            fragment points, binary
//!     coarse.txt              coarse transform, 4×4 row-major
//!     transform.txt           final transform, 4×4 row-major
//!     registered.ply          fragment in the reference frame
//!     record.json             diagnostics, timings, failure, evaluation
//!   report.json, report.csv
//!   drift.csv, trajectory_<component>.ply
//! ```

use std::ops::Range;
use std::path::{Path, PathBuf};

use mlsreg_core::config::FragmentStrategy;
use mlsreg_core::fragment::{Fragment, FragmentStatus, SscOutcome};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::report::{read_json, write_json, FragmentRecord};

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let ws = Self::new(root);
        std::fs::create_dir_all(ws.root.join("fragments")).map_err(io_err(&ws.root))?;
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fragment_dir(&self, id: usize) -> PathBuf {
        self.root.join("fragments").join(id.to_string())
    }

    pub fn ensure_fragment_dir(&self, id: usize) -> Result<PathBuf> {
        let dir = self.fragment_dir(id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }

    pub fn fragment_cloud(&self, id: usize) -> PathBuf {
        self.fragment_dir(id).join("fragment.ply")
    }

    pub fn coarse_transform(&self, id: usize) -> PathBuf {
        self.fragment_dir(id).join("coarse.txt")
    }

    pub fn transform(&self, id: usize) -> PathBuf {
        self.fragment_dir(id).join("transform.txt")
    }

    pub fn registered_cloud(&self, id: usize) -> PathBuf {
        self.fragment_dir(id).join("registered.ply")
    }

    pub fn record_path(&self, id: usize) -> PathBuf {
        self.fragment_dir(id).join("record.json")
    }

    pub fn plan_path(&self) -> PathBuf {
        self.root.join("fragments.json")
    }

    pub fn ssc_path(&self) -> PathBuf {
        self.root.join("ssc.json")
    }

    pub fn drift_csv(&self) -> PathBuf {
        self.root.join("drift.csv")
    }

    pub fn colored_trajectory(&self, component: &str) -> PathBuf {
        self.root.join(format!("trajectory_{component}.ply"))
    }

    pub fn read_record(&self, id: usize) -> Result<FragmentRecord> {
        read_json(&self.record_path(id))
    }

    pub fn write_record(&self, record: &FragmentRecord) -> Result<()> {
        self.ensure_fragment_dir(record.id)?;
        write_json(record, &self.record_path(record.id))
    }

    pub fn read_plan(&self) -> Result<PlanRecord> {
        read_json(&self.plan_path())
    }

    /// Removes a stale artifact left by an earlier run.
    pub fn remove(&self, path: &Path) -> Result<()> {
        match std::fs::remove_file(path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(path)(e)),
            _ => Ok(()),
        }
    }
}

pub fn strategy_name(s: FragmentStrategy) -> &'static str {
    match s {
        FragmentStrategy::Ssc => "ssc",
        FragmentStrategy::FixedTime => "fixed-time",
        FragmentStrategy::FixedLength => "fixed-length",
    }
}

fn status_name(s: FragmentStatus) -> String {
    match s {
        FragmentStatus::Initial => "initial".into(),
        FragmentStatus::Validated => "validated".into(),
        FragmentStatus::ValidatedAtCap => "validated-at-cap".into(),
        FragmentStatus::Rejected => "rejected".into(),
        FragmentStatus::MergedInto(id) => format!("merged-into-{id}"),
    }
}

fn parse_status(s: &str) -> Option<FragmentStatus> {
    Some(match s {
        "initial" => FragmentStatus::Initial,
        "validated" => FragmentStatus::Validated,
        "validated-at-cap" => FragmentStatus::ValidatedAtCap,
        "rejected" => FragmentStatus::Rejected,
        other => FragmentStatus::MergedInto(other.strip_prefix("merged-into-")?.parse().ok()?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedFragment {
    pub id: usize,
    pub point_range: [usize; 2],
    pub time_span: [f64; 2],
    pub trajectory_length_m: f64,
    pub status: String,
    pub append_count: usize,
}

impl From<&Fragment> for PlannedFragment {
    fn from(f: &Fragment) -> Self {
        Self {
            id: f.id,
            point_range: [f.point_range.start, f.point_range.end],
            time_span: [f.time_span.0, f.time_span.1],
            trajectory_length_m: f.trajectory_length,
            status: status_name(f.status),
            append_count: f.append_count,
        }
    }
}

impl PlannedFragment {
    pub fn to_fragment(&self) -> Result<Fragment> {
        let status = parse_status(&self.status)
            .ok_or_else(|| Error::Usage(format!("fragment {}: unknown status `{}`", self.id, self.status)))?;
        Ok(Fragment {
            id: self.id,
            point_range: Range {
                start: self.point_range[0],
                end: self.point_range[1],
            },
            time_span: (self.time_span[0], self.time_span[1]),
            trajectory_length: self.trajectory_length_m,
            status,
            append_count: self.append_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub strategy: String,
    pub source_points: usize,
    pub fragments: Vec<PlannedFragment>,
}

impl PlanRecord {
    pub fn fragments(&self) -> Result<Vec<Fragment>> {
        self.fragments.iter().map(PlannedFragment::to_fragment).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub seed: String,
    pub centroid: [f64; 3],
    pub population: usize,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub initial_ids: [usize; 2],
    pub trajectory_length_m: f64,
    pub length_ok: bool,
    pub accepted: bool,
    pub alignment_deg: Option<f64>,
    pub projected_normals: Option<usize>,
    pub mean_displacement: Option<f64>,
    pub std_displacement: Option<f64>,
    pub min_population_fraction: Option<f64>,
    pub clusters: Vec<ClusterRecord>,
}

/// Append history of one emitted fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscHistory {
    pub fragment: usize,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscReport {
    pub initial: Vec<PlannedFragment>,
    pub emitted: Vec<SscHistory>,
}

impl From<&SscOutcome> for SscReport {
    fn from(o: &SscOutcome) -> Self {
        let emitted = o
            .records
            .iter()
            .map(|r| SscHistory {
                fragment: r.fragment_id,
                attempts: r
                    .attempts
                    .iter()
                    .map(|a| {
                        let c = a.check.as_ref();
                        AttemptRecord {
                            initial_ids: [a.initial_ids.start, a.initial_ids.end],
                            trajectory_length_m: a.trajectory_length,
                            length_ok: a.length_ok,
                            accepted: a.accepted,
                            alignment_deg: c.map(|c| c.alignment_deg),
                            projected_normals: c.map(|c| c.projected),
                            mean_displacement: c.map(|c| c.mean_displacement),
                            std_displacement: c.map(|c| c.std_displacement),
                            min_population_fraction: c.map(|c| c.min_population_fraction),
                            clusters: c
                                .and_then(|c| c.clusters.as_ref())
                                .map(|cl| {
                                    cl.iter()
                                        .map(|d| ClusterRecord {
                                            seed: d.seed.label().into(),
                                            centroid: d.converged_centroid.into_inner().into(),
                                            population: d.population,
                                            displacement: d.displacement,
                                        })
                                        .collect()
                                })
                                .unwrap_or_default(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            initial: o.initial.iter().map(PlannedFragment::from).collect(),
            emitted,
        }
    }
}

pub fn write_plan(ws: &Workspace, plan: &PlanRecord) -> Result<()> {
    write_json(plan, &ws.plan_path())
}

pub fn write_ssc(ws: &Workspace, ssc: &SscOutcome) -> Result<()> {
    write_json(&SscReport::from(ssc), &ws.ssc_path())
}
