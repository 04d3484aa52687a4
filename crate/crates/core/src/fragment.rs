//! Trajectory-ordered fragmentation with the semi-sphere check.
//!
//! A scan is first cut into equal time (or trajectory-length) slices. Each
//! slice is then validated: its normals, oriented towards the slice centroid
//! and mirrored onto the upper unit hemisphere, are clustered with K-means
//! seeded at the five canonical directions `±x, ±y, +z`. A slice whose seeds
//! stay close to their start positions, and whose clusters are all populated,
//! contains three mutually orthogonal surface families and is accepted.
//! Otherwise the next slice is appended and the check repeats.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{Matrix3, Vector3};

use crate::config::{FragmentConfig, FragmentMode};
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, Normal, PointCloud, RigidTransform, UnitVector3};
use crate::index::SpatialIndex;
use crate::normals::estimate_normals_at;
use crate::trajectory::Trajectory;

/// Validation state of a fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentStatus {
    Initial,
    Validated,
    /// Emitted without passing because the size cap or the end of the scan
    /// was reached.
    ValidatedAtCap,
    Rejected,
    /// Appended to the emitted fragment with this id.
    MergedInto(usize),
}

impl FragmentStatus {
    pub fn is_emitted(&self) -> bool {
        matches!(self, Self::Validated | Self::ValidatedAtCap)
    }
}

/// Contiguous slice of a trajectory-ordered cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: usize,
    pub point_range: Range<usize>,
    /// `(t_start, t_end)` in seconds.
    pub time_span: (f64, f64),
    pub trajectory_length: f64,
    pub status: FragmentStatus,
    /// Number of initial fragments appended to the first one.
    pub append_count: usize,
}

impl Fragment {
    pub fn len(&self) -> usize {
        self.point_range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_range.is_empty()
    }

    pub fn mid_time(&self) -> f64 {
        0.5 * (self.time_span.0 + self.time_span.1)
    }
}

/// How initial fragments are cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slicing {
    Temporal { interval_s: f64 },
    Spatial { length_m: f64 },
}

impl Slicing {
    pub fn from_config(cfg: &FragmentConfig) -> Self {
        match cfg.mode {
            FragmentMode::Temporal => Slicing::Temporal {
                interval_s: cfg.interval_s,
            },
            FragmentMode::Spatial => Slicing::Spatial {
                length_m: cfg.length_m,
            },
        }
    }
}

/// Cuts `cloud` into contiguous fragments.
///
/// The cloud must be in acquisition order: nondecreasing `gps_time` for
/// temporal slicing, nondecreasing trajectory arclength for spatial slicing.
/// Empty slices produce no fragment; the last fragment may be shorter.
pub fn initial_fragmentation(
    cloud: &PointCloud,
    trajectory: Option<&Trajectory>,
    slicing: Slicing,
) -> Result<Vec<Fragment>> {
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    match slicing {
        Slicing::Temporal { interval_s } => {
            if !(interval_s > 0.0) {
                return Err(crate::error::invalid("interval_s", "must be positive"));
            }
            let mut times = Vec::with_capacity(cloud.len());
            for p in &cloud.points {
                times.push(p.gps_time.ok_or(Error::MissingAttribute {
                    attribute: "gps_time",
                    hint: "temporal fragmentation needs per-point GPS time; use spatial mode",
                })?);
            }
            check_ordered(&times)?;
            let t0 = times[0];
            let t_last = times[times.len() - 1];
            let bins = bin_keys(&times, t0, t_last, interval_s);
            Ok(group_bins(&bins, |b, is_last| {
                let start = t0 + b as f64 * interval_s;
                let end = if is_last {
                    t_last.max(start)
                } else {
                    t0 + (b + 1) as f64 * interval_s
                };
                let length = trajectory.map_or(0.0, |tr| tr.length_between(start, end));
                ((start, end), length)
            }))
        }
        Slicing::Spatial { length_m } => {
            if !(length_m > 0.0) {
                return Err(crate::error::invalid("length_m", "must be positive"));
            }
            let traj = trajectory.ok_or(Error::MissingAttribute {
                attribute: "trajectory",
                hint: "spatial fragmentation needs the platform trajectory",
            })?;
            let s: Vec<f64> = cloud
                .points
                .iter()
                .map(|p| match p.gps_time {
                    Some(t) => traj.arclength_at(t),
                    None => traj.project_arclength(&p.position),
                })
                .collect();
            check_ordered(&s)?;
            let total = traj.total_length();
            let bins = bin_keys(&s, 0.0, s[s.len() - 1], length_m);
            Ok(group_bins(&bins, |b, _| {
                let s0 = (b as f64 * length_m).min(total);
                let s1 = ((b + 1) as f64 * length_m).min(total);
                let t0 = traj.time_at_arclength(s0).unwrap_or(0.0);
                let t1 = traj.time_at_arclength(s1).unwrap_or(0.0);
                ((t0, t1), (s1 - s0).max(0.0))
            }))
        }
    }
}

/// Half-open bins of width `step` from `start`; a key exactly on the final
/// boundary joins the last bin instead of opening a one-point bin.
fn bin_keys(keys: &[f64], start: f64, end: f64, step: f64) -> Vec<i64> {
    let last = (libm::ceil((end - start) / step) as i64 - 1).max(0);
    keys.iter()
        .map(|k| (libm::floor((k - start) / step) as i64).min(last))
        .collect()
}

fn check_ordered(keys: &[f64]) -> Result<()> {
    match keys.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::NotOrdered { index: i + 1 }),
        None => Ok(()),
    }
}

fn group_bins(
    bins: &[i64],
    mut describe: impl FnMut(i64, bool) -> ((f64, f64), f64),
) -> Vec<Fragment> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < bins.len() {
        let mut end = start + 1;
        while end < bins.len() && bins[end] == bins[start] {
            end += 1;
        }
        let (time_span, trajectory_length) = describe(bins[start], end == bins.len());
        out.push(Fragment {
            id: out.len(),
            point_range: start..end,
            time_span,
            trajectory_length,
            status: FragmentStatus::Initial,
            append_count: 0,
        });
        start = end;
    }
    out
}

/// Trajectory length travelled during the fragment and whether it reaches
/// `min_length_m`.
pub fn check_trajectory_length(
    fragment: &Fragment,
    trajectory: &Trajectory,
    min_length_m: f64,
) -> (f64, bool) {
    let length = trajectory.length_between(fragment.time_span.0, fragment.time_span.1);
    (length, length >= min_length_m)
}

/// Rotation about the global z-axis applied by [`align_longest_axis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAlignment {
    pub rotation: RigidTransform,
    /// Applied rotation angle in radians, within (−π/2, π/2].
    pub angle_rad: f64,
    /// Set when the points coincide in XY and no direction exists.
    pub degenerate: bool,
}

/// Rotates the cloud about z so that the long side of its minimum-area
/// horizontal bounding rectangle maps onto the x-axis.
pub fn align_longest_axis(cloud: &PointCloud) -> (PointCloud, AxisAlignment) {
    let alignment = horizontal_alignment(cloud);
    (apply_transform(cloud, &alignment.rotation), alignment)
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull, counter-clockwise, without collinear points.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let base = hull.len();
        let iter: &mut dyn Iterator<Item = &[f64; 2]> = if pass == 0 {
            &mut pts.iter()
        } else {
            &mut pts.iter().rev()
        };
        for &p in iter {
            while hull.len() >= base + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn horizontal_alignment(cloud: &PointCloud) -> AxisAlignment {
    let identity = AxisAlignment {
        rotation: RigidTransform::identity(),
        angle_rad: 0.0,
        degenerate: true,
    };
    let hull = convex_hull(cloud.points.iter().map(|p| [p.position.x, p.position.y]).collect());
    let mut best: Option<(f64, f64)> = None; // (area, long-axis angle)
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len = libm::hypot(ex, ey);
        if len < 1e-12 {
            continue;
        }
        let (ux, uy) = (ex / len, ey / len);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let (dx, dy) = (p[0] - a[0], p[1] - a[1]);
            let pu = dx * ux + dy * uy;
            let pv = -dx * uy + dy * ux;
            lo_u = lo_u.min(pu);
            hi_u = hi_u.max(pu);
            lo_v = lo_v.min(pv);
            hi_v = hi_v.max(pv);
        }
        let (wu, wv) = (hi_u - lo_u, hi_v - lo_v);
        let area = wu * wv;
        let angle = if wu >= wv {
            libm::atan2(uy, ux)
        } else {
            libm::atan2(ux, -uy)
        };
        if best.is_none_or(|(a, _)| area < a - 1e-12 * area.abs().max(1.0)) {
            best = Some((area, angle));
        }
    }
    let Some((_, mut theta)) = best else {
        return identity;
    };
    // An axis has no sign: fold into (−π/2, π/2].
    let half_pi = core::f64::consts::FRAC_PI_2;
    while theta > half_pi {
        theta -= core::f64::consts::PI;
    }
    while theta <= -half_pi {
        theta += core::f64::consts::PI;
    }
    let angle = -theta;
    AxisAlignment {
        rotation: RigidTransform::from_axis_angle(&Vector3::z(), angle),
        angle_rad: angle,
        degenerate: false,
    }
}

/// Oriented normals mirrored onto the upper unit hemisphere (`z ≥ 0`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemiSphereProjection {
    pub directions: Vec<UnitVector3>,
}

/// Flips every valid normal towards the cloud centroid, replaces `z` by
/// `|z|` and renormalizes. Invalid normals are skipped.
pub fn orient_and_project_normals(cloud: &PointCloud) -> SemiSphereProjection {
    let Some(normals) = cloud.normals.as_ref() else {
        return SemiSphereProjection::default();
    };
    let Some(centroid) = cloud.centroid() else {
        return SemiSphereProjection::default();
    };
    let positions: Vec<Vector3<f64>> = cloud.points.iter().map(|p| p.position).collect();
    project_oriented(&positions, normals, &centroid)
}

fn project_oriented(
    positions: &[Vector3<f64>],
    normals: &[Normal],
    centroid: &Vector3<f64>,
) -> SemiSphereProjection {
    let directions = positions
        .iter()
        .zip(normals)
        .filter_map(|(p, n)| {
            let n = (*n)?;
            let mut v = n.into_inner();
            if v.dot(&(centroid - p)) < 0.0 {
                v = -v;
            }
            v.z = v.z.abs();
            UnitVector3::new(v)
        })
        .collect();
    SemiSphereProjection { directions }
}

/// Canonical K-means seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedAxis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
}

impl SeedAxis {
    pub const ALL: [SeedAxis; 5] = [
        SeedAxis::PosX,
        SeedAxis::NegX,
        SeedAxis::PosY,
        SeedAxis::NegY,
        SeedAxis::PosZ,
    ];

    pub fn direction(&self) -> Vector3<f64> {
        match self {
            SeedAxis::PosX => Vector3::new(1.0, 0.0, 0.0),
            SeedAxis::NegX => Vector3::new(-1.0, 0.0, 0.0),
            SeedAxis::PosY => Vector3::new(0.0, 1.0, 0.0),
            SeedAxis::NegY => Vector3::new(0.0, -1.0, 0.0),
            SeedAxis::PosZ => Vector3::new(0.0, 0.0, 1.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SeedAxis::PosX => "+x",
            SeedAxis::NegX => "-x",
            SeedAxis::PosY => "+y",
            SeedAxis::NegY => "-y",
            SeedAxis::PosZ => "+z",
        }
    }
}

/// Final state of one seeded cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterDiagnostics {
    pub seed: SeedAxis,
    pub converged_centroid: UnitVector3,
    pub population: usize,
    /// Chord distance between the converged centroid and the initial seed;
    /// 2 for an empty cluster.
    pub displacement: f64,
}

const KMEANS_MAX_ITERATIONS: usize = 50;

/// Spherical K-means (K = 5) with fixed canonical seeds.
///
/// Assignment maximizes cosine similarity (ties go to the earlier seed);
/// centroids are renormalized member means. Stops when no assignment
/// changes or after 50 iterations.
pub fn kmeans_semisphere(projection: &SemiSphereProjection) -> Result<[ClusterDiagnostics; 5]> {
    let dirs = &projection.directions;
    if dirs.len() < 5 {
        return Err(Error::InsufficientData {
            what: "projected normals",
            needed: 5,
            got: dirs.len(),
        });
    }
    let mut centroids: [Vector3<f64>; 5] = SeedAxis::ALL.map(|s| s.direction());
    let mut assignment = alloc::vec![usize::MAX; dirs.len()];
    let mut populations = [0usize; 5];

    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut changed = false;
        for (slot, d) in assignment.iter_mut().zip(dirs) {
            let mut best = 0;
            let mut best_cos = f64::NEG_INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let cos = d.dot(c);
                if cos > best_cos {
                    best_cos = cos;
                    best = j;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = [Vector3::zeros(); 5];
        populations = [0; 5];
        for (a, d) in assignment.iter().zip(dirs) {
            sums[*a] += d.as_vector();
            populations[*a] += 1;
        }
        for j in 0..5 {
            if populations[j] > 0 {
                if let Some(u) = UnitVector3::new(sums[j]) {
                    centroids[j] = u.into_inner();
                }
            }
        }
    }

    Ok(core::array::from_fn(|j| {
        let seed = SeedAxis::ALL[j];
        let displacement = if populations[j] == 0 {
            2.0
        } else {
            (centroids[j] - seed.direction()).norm()
        };
        ClusterDiagnostics {
            seed,
            converged_centroid: UnitVector3::new_unchecked(centroids[j]),
            population: populations[j],
            displacement,
        }
    }))
}

/// Parameters of the semi-sphere check.
#[derive(Debug, Clone, PartialEq)]
pub struct SscParams {
    pub min_traj_m: f64,
    pub disp_threshold: f64,
    pub min_pop_fraction: f64,
    pub max_span_fragments: usize,
    pub normal_k: usize,
    pub max_normals: usize,
}

impl From<&FragmentConfig> for SscParams {
    fn from(c: &FragmentConfig) -> Self {
        Self {
            min_traj_m: c.min_traj_m,
            disp_threshold: c.disp_threshold,
            min_pop_fraction: c.min_pop_fraction,
            max_span_fragments: c.max_span_fragments,
            normal_k: c.normal_k,
            max_normals: c.max_normals,
        }
    }
}

impl Default for SscParams {
    fn default() -> Self {
        Self::from(&FragmentConfig::default())
    }
}

/// Outcome of the hemisphere test on one point set.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSphereCheck {
    pub alignment_deg: f64,
    pub projected: usize,
    pub clusters: Option<[ClusterDiagnostics; 5]>,
    pub mean_displacement: f64,
    /// Reported only; the decision gates on the mean.
    pub std_displacement: f64,
    pub min_population_fraction: f64,
    pub accepted: bool,
}

/// Runs alignment, normal estimation, projection and clustering on `cloud`.
pub fn semi_sphere_check(cloud: &PointCloud, params: &SscParams) -> Result<SemiSphereCheck> {
    let (aligned, alignment) = align_longest_axis(cloud);
    let n = aligned.len();
    let rejected = |projected| SemiSphereCheck {
        alignment_deg: alignment.angle_rad.to_degrees(),
        projected,
        clusters: None,
        mean_displacement: 2.0,
        std_displacement: 0.0,
        min_population_fraction: 0.0,
        accepted: false,
    };
    if n < params.normal_k + 1 {
        return Ok(rejected(0));
    }
    let stride = n.div_ceil(params.max_normals.max(1));
    let queries: Vec<usize> = (0..n).step_by(stride).collect();
    let index = SpatialIndex::new(&aligned);
    let normals = estimate_normals_at(&aligned, &index, &queries, params.normal_k)?;
    let positions: Vec<Vector3<f64>> = queries.iter().map(|&i| aligned.points[i].position).collect();
    let centroid = aligned.centroid().unwrap_or_default();
    let projection = project_oriented(&positions, &normals, &centroid);
    let total = projection.directions.len();
    let Ok(clusters) = kmeans_semisphere(&projection) else {
        return Ok(rejected(total));
    };
    let disps: Vec<f64> = clusters.iter().map(|c| c.displacement).collect();
    let mean = disps.iter().sum::<f64>() / 5.0;
    let var = disps.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / 5.0;
    let min_pop = clusters.iter().map(|c| c.population).min().unwrap_or(0);
    let min_frac = min_pop as f64 / total as f64;
    Ok(SemiSphereCheck {
        alignment_deg: alignment.angle_rad.to_degrees(),
        projected: total,
        clusters: Some(clusters),
        mean_displacement: mean,
        std_displacement: libm::sqrt(var),
        min_population_fraction: min_frac,
        accepted: mean <= params.disp_threshold && min_frac >= params.min_pop_fraction,
    })
}

/// One validation attempt on a (possibly grown) fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct SscAttempt {
    /// Initial fragments covered by this attempt.
    pub initial_ids: Range<usize>,
    pub trajectory_length: f64,
    pub length_ok: bool,
    /// `None` when the length check already failed.
    pub check: Option<SemiSphereCheck>,
    pub accepted: bool,
}

/// Append history of one emitted fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct SscRecord {
    pub fragment_id: usize,
    pub attempts: Vec<SscAttempt>,
}

/// Result of [`ssc_validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SscOutcome {
    /// Emitted fragments; together they partition the cloud.
    pub fragments: Vec<Fragment>,
    /// Initial fragments with their final status.
    pub initial: Vec<Fragment>,
    pub records: Vec<SscRecord>,
}

/// Validates initial fragments in trajectory order, appending the next
/// initial fragment until the check passes or the size cap is reached.
pub fn ssc_validate(
    cloud: &PointCloud,
    initial: &[Fragment],
    trajectory: &Trajectory,
    params: &SscParams,
) -> Result<SscOutcome> {
    let mut statuses: Vec<FragmentStatus> = alloc::vec![FragmentStatus::Initial; initial.len()];
    let mut fragments = Vec::new();
    let mut records = Vec::new();
    let cap = params.max_span_fragments.max(1);

    let mut start = 0;
    while start < initial.len() {
        let id = fragments.len();
        let mut end = start + 1;
        let mut attempts = Vec::new();
        let status = loop {
            let range = initial[start].point_range.start..initial[end - 1].point_range.end;
            let span = (initial[start].time_span.0, initial[end - 1].time_span.1);
            let length = trajectory.length_between(span.0, span.1);
            let length_ok = length >= params.min_traj_m;
            let check = if length_ok {
                Some(semi_sphere_check(&cloud.slice(range), params)?)
            } else {
                None
            };
            let accepted = check.as_ref().is_some_and(|c| c.accepted);
            attempts.push(SscAttempt {
                initial_ids: start..end,
                trajectory_length: length,
                length_ok,
                check,
                accepted,
            });
            if accepted {
                break FragmentStatus::Validated;
            }
            if end - start >= cap || end == initial.len() {
                log::warn!(
                    "fragment {id}: semi-sphere check not passed after {} initial fragments; emitted at cap",
                    end - start
                );
                break FragmentStatus::ValidatedAtCap;
            }
            end += 1;
        };
        statuses[start] = status;
        for s in &mut statuses[start + 1..end] {
            *s = FragmentStatus::MergedInto(id);
        }
        let span = (initial[start].time_span.0, initial[end - 1].time_span.1);
        fragments.push(Fragment {
            id,
            point_range: initial[start].point_range.start..initial[end - 1].point_range.end,
            time_span: span,
            trajectory_length: trajectory.length_between(span.0, span.1),
            status,
            append_count: end - start - 1,
        });
        records.push(SscRecord {
            fragment_id: id,
            attempts,
        });
        start = end;
    }

    let initial = initial
        .iter()
        .zip(statuses)
        .map(|(f, status)| Fragment { status, ..f.clone() })
        .collect();
    Ok(SscOutcome {
        fragments,
        initial,
        records,
    })
}

/// Initial fragments accepted as they are (fixed time or length slicing).
pub fn fixed_fragmentation(
    cloud: &PointCloud,
    trajectory: Option<&Trajectory>,
    slicing: Slicing,
) -> Result<Vec<Fragment>> {
    let mut frags = initial_fragmentation(cloud, trajectory, slicing)?;
    for f in &mut frags {
        f.status = FragmentStatus::Validated;
    }
    Ok(frags)
}

/// Rotation matrix mapping `a` onto `b` (both unit); test helper for
/// constructing tilted scenes.
pub fn rotation_between(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let axis = a.cross(b);
    let s = axis.norm();
    let c = a.dot(b);
    if s < 1e-15 {
        return if c > 0.0 {
            Matrix3::identity()
        } else {
            RigidTransform::from_axis_angle(&a.cross(&Vector3::x()).try_normalize(1e-12).unwrap_or(Vector3::y()), core::f64::consts::PI).rotation
        };
    }
    RigidTransform::from_axis_angle(&axis, libm::atan2(s, c)).rotation
}
