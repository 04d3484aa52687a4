//! Deterministic synthetic street and box scenes, plus drift injection.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`. Each
//! scene element draws from its own ChaCha stream (`set_stream(element)`),
//! so adding clutter never perturbs the façade layout and vice versa.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as Gauss, UnitSphere};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform};
use crate::trajectory::{Trajectory, TrajectorySample};

/// Class labels written by the generator.
pub mod labels {
    pub const GROUND: u16 = 1;
    pub const BUILDING: u16 = 2;
    pub const VEGETATION: u16 = 3;
    pub const VEHICLE: u16 = 4;
    pub const PEDESTRIAN: u16 = 5;
    pub const POLE: u16 = 6;
}

// Stream ids keep element draws independent of each other.
const STREAM_LAYOUT_LEFT: u64 = 1;
const STREAM_LAYOUT_RIGHT: u64 = 2;
const STREAM_CLUTTER_LAYOUT: u64 = 3;
const STREAM_SURFACES: u64 = 1 << 20;
const STREAM_CLUTTER: u64 = 1 << 40;

/// Random building blocks along each side of the street.
#[derive(Debug, Clone, PartialEq)]
pub struct FacadeLayout {
    pub block_length_m: (f64, f64),
    /// Gap between consecutive blocks; each gap exposes two end walls.
    pub gap_length_m: (f64, f64),
    pub height_m: (f64, f64),
    /// Distance of the façade behind the street edge.
    pub setback_m: (f64, f64),
    /// How far end walls extend away from the street.
    pub depth_m: f64,
}

impl FacadeLayout {
    /// One uninterrupted façade per side.
    pub fn continuous(height_m: f64) -> Self {
        Self {
            block_length_m: (f64::INFINITY, f64::INFINITY),
            gap_length_m: (0.0, 0.0),
            height_m: (height_m, height_m),
            setback_m: (0.0, 0.0),
            depth_m: 0.0,
        }
    }
}

impl Default for FacadeLayout {
    fn default() -> Self {
        Self {
            block_length_m: (8.0, 16.0),
            gap_length_m: (3.0, 6.0),
            height_m: (8.0, 14.0),
            setback_m: (0.0, 1.5),
            depth_m: 6.0,
        }
    }
}

/// Perpendicular street opening on both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideStreet {
    pub x_m: f64,
    pub width_m: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClutterShape {
    Spheres,
    Poles,
    Mixed,
}

/// Description of a straight street along +x, starting at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub street_length_m: f64,
    pub street_width_m: f64,
    pub facades: FacadeLayout,
    /// `x` ranges without any façade on either side.
    pub facade_gaps: Vec<(f64, f64)>,
    pub side_streets: Vec<SideStreet>,
    pub spacing_m: f64,
    pub noise_sigma_m: f64,
    /// Share of all points placed on clutter. Clutter carries vegetation or
    /// pole labels, so this is also the share of non-static labels.
    pub clutter_fraction: f64,
    pub clutter_shape: ClutterShape,
    pub speed_mps: f64,
    pub sensor_height_m: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            street_length_m: 100.0,
            street_width_m: 16.0,
            facades: FacadeLayout::default(),
            facade_gaps: Vec::new(),
            side_streets: Vec::new(),
            spacing_m: 0.2,
            noise_sigma_m: 0.005,
            clutter_fraction: 0.0,
            clutter_shape: ClutterShape::Mixed,
            speed_mps: 4.0,
            sensor_height_m: 2.0,
            seed: 0,
        }
    }
}

/// Planar rectangle `origin + a·u + b·v`, `a, b ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub plane_id: u32,
    pub origin: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub label: u16,
}

impl Surface {
    pub fn normal(&self) -> Vector3<f64> {
        self.u.cross(&self.v).normalize()
    }

    pub fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }

    /// Signed distance of `p` from the surface plane.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal().dot(&(p - self.origin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClutterObject {
    Sphere { center: Vector3<f64>, radius: f64 },
    Pole { base: Vector3<f64>, radius: f64, height: f64 },
}

impl ClutterObject {
    pub fn area(&self) -> f64 {
        match *self {
            Self::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Self::Pole { radius, height, .. } => 2.0 * PI * radius * height,
        }
    }

    pub fn label(&self) -> u16 {
        match self {
            Self::Sphere { .. } => labels::VEGETATION,
            Self::Pole { .. } => labels::POLE,
        }
    }
}

/// Static world geometry; sampling it with different seeds yields
/// independent scans of the same scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub surfaces: Vec<Surface>,
    pub clutter: Vec<ClutterObject>,
    /// Number of clutter points to draw.
    pub clutter_points: usize,
    pub trajectory: Trajectory,
    pub speed_mps: f64,
    pub spacing_m: f64,
    pub noise_sigma_m: f64,
}

/// Sampled scene with per-point ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Points sorted by GPS time.
    pub cloud: PointCloud,
    pub trajectory: Trajectory,
    /// Generating surface of every point; `None` for clutter.
    pub plane_ids: Vec<Option<u32>>,
    pub surfaces: Vec<Surface>,
}

impl Scene {
    pub fn surface(&self, plane_id: u32) -> Option<&Surface> {
        self.surfaces.iter().find(|s| s.plane_id == plane_id)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn check_range(name: &'static str, r: (f64, f64), min: f64) -> Result<()> {
    if !(r.0 >= min && r.1 >= r.0) {
        return Err(invalid(name, "range must satisfy min <= lo <= hi"));
    }
    Ok(())
}

/// Subtracts the sorted, disjoint `cuts` from `[a, b]`.
fn subtract(a: f64, b: f64, cuts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pieces = Vec::new();
    let mut start = a;
    for &(c0, c1) in cuts {
        if c1 <= start || c0 >= b {
            continue;
        }
        if c0 > start {
            pieces.push((start, c0));
        }
        start = start.max(c1);
    }
    if start < b {
        pieces.push((start, b));
    }
    pieces
}

struct SurfaceSet(Vec<Surface>);

impl SurfaceSet {
    fn push(&mut self, origin: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, label: u16) {
        if u.norm() > 1e-9 && v.norm() > 1e-9 {
            let plane_id = self.0.len() as u32;
            self.0.push(Surface {
                plane_id,
                origin,
                u,
                v,
                label,
            });
        }
    }
}

/// Builds the static geometry of a street scene.
pub fn generate_layout(spec: &SceneSpec) -> Result<Layout> {
    let len = spec.street_length_m;
    let half = 0.5 * spec.street_width_m;
    if !(len > 0.0) {
        return Err(invalid("street_length_m", "must be positive"));
    }
    if !(half > 0.0) {
        return Err(invalid("street_width_m", "must be positive"));
    }
    if !(spec.spacing_m > 0.0) {
        return Err(invalid("spacing_m", "must be positive"));
    }
    if !(spec.noise_sigma_m >= 0.0) {
        return Err(invalid("noise_sigma_m", "must be nonnegative"));
    }
    if !(0.0..1.0).contains(&spec.clutter_fraction) {
        return Err(invalid("clutter_fraction", "must be within [0, 1)"));
    }
    if !(spec.speed_mps > 0.0) {
        return Err(invalid("speed_mps", "must be positive"));
    }
    let f = &spec.facades;
    check_range("facades.block_length_m", f.block_length_m, 1e-3)?;
    check_range("facades.gap_length_m", f.gap_length_m, 0.0)?;
    check_range("facades.height_m", f.height_m, 0.0)?;
    check_range("facades.setback_m", f.setback_m, 0.0)?;

    // Openings: explicit gaps and side streets, with the depth of the walls
    // bounding them.
    let mut cuts: Vec<(f64, f64, f64)> = Vec::new();
    for &(a, b) in &spec.facade_gaps {
        if !(b > a) {
            return Err(invalid("facade_gaps", "each gap needs start < end"));
        }
        cuts.push((a, b, f.depth_m));
    }
    for s in &spec.side_streets {
        if !(s.width_m > 0.0 && s.length_m > 0.0) {
            return Err(invalid("side_streets", "width and length must be positive"));
        }
        cuts.push((s.x_m - 0.5 * s.width_m, s.x_m + 0.5 * s.width_m, s.length_m));
    }
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in cuts.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(invalid("facade_gaps", "gaps and side streets overlap"));
        }
    }
    let cut_ranges: Vec<(f64, f64)> = cuts.iter().map(|c| (c.0, c.1)).collect();

    let mut set = SurfaceSet(Vec::new());
    let max_setback = f.setback_m.1;
    set.push(
        Vector3::new(0.0, -half - max_setback, 0.0),
        Vector3::new(len, 0.0, 0.0),
        Vector3::new(0.0, 2.0 * (half + max_setback), 0.0),
        labels::GROUND,
    );

    for (side, stream) in [(1.0, STREAM_LAYOUT_LEFT), (-1.0, STREAM_LAYOUT_RIGHT)] {
        let mut rng = stream_rng(spec.seed, stream);
        let mut x = 0.0;
        while x < len {
            let block = uniform(&mut rng, f.block_length_m);
            let height = uniform(&mut rng, f.height_m);
            let setback = uniform(&mut rng, f.setback_m);
            let gap = uniform(&mut rng, f.gap_length_m);
            let end = (x + block).min(len);
            let y = side * (half + setback);
            for (a, b) in subtract(x, end, &cut_ranges) {
                // Façade faces the street: u × v points towards −side·y.
                let (u, v) = if side > 0.0 {
                    (Vector3::new(0.0, 0.0, height), Vector3::new(b - a, 0.0, 0.0))
                } else {
                    (Vector3::new(b - a, 0.0, 0.0), Vector3::new(0.0, 0.0, height))
                };
                set.push(Vector3::new(a, y, 0.0), u, v, labels::BUILDING);
                for (wx, is_start) in [(a, true), (b, false)] {
                    if wx <= 0.0 || wx >= len {
                        continue;
                    }
                    let depth = cuts
                        .iter()
                        .find(|c| (is_start && (c.1 - wx).abs() < 1e-9) || (!is_start && (c.0 - wx).abs() < 1e-9))
                        .map_or(f.depth_m, |c| c.2);
                    if !(depth > 0.0) {
                        continue;
                    }
                    set.push(
                        Vector3::new(wx, y, 0.0),
                        Vector3::new(0.0, side * depth, 0.0),
                        Vector3::new(0.0, 0.0, height),
                        labels::BUILDING,
                    );
                }
            }
            x = end + gap;
        }
    }

    for s in &spec.side_streets {
        for side in [1.0, -1.0] {
            set.push(
                Vector3::new(s.x_m - 0.5 * s.width_m, side * (half + max_setback), 0.0),
                Vector3::new(s.width_m, 0.0, 0.0),
                Vector3::new(0.0, side * (s.length_m - max_setback).max(0.0), 0.0),
                labels::GROUND,
            );
        }
    }
    let surfaces = set.0;

    let structural_area: f64 = surfaces.iter().map(Surface::area).sum();
    let structural_expected = structural_area / (spec.spacing_m * spec.spacing_m);
    let cf = spec.clutter_fraction;
    let clutter_points = libm::round(cf / (1.0 - cf) * structural_expected) as usize;
    let clutter = if clutter_points > 0 {
        place_clutter(spec, clutter_points as f64 * spec.spacing_m * spec.spacing_m)?
    } else {
        Vec::new()
    };

    Ok(Layout {
        surfaces,
        clutter,
        clutter_points,
        trajectory: street_trajectory(len, spec.speed_mps, spec.sensor_height_m)?,
        speed_mps: spec.speed_mps,
        spacing_m: spec.spacing_m,
        noise_sigma_m: spec.noise_sigma_m,
    })
}

fn place_clutter(spec: &SceneSpec, needed_area: f64) -> Result<Vec<ClutterObject>> {
    let half = 0.5 * spec.street_width_m;
    let mut rng = stream_rng(spec.seed, STREAM_CLUTTER_LAYOUT);
    let mut objects = Vec::new();
    let mut area = 0.0;
    while area < needed_area {
        let sphere = match spec.clutter_shape {
            ClutterShape::Spheres => true,
            ClutterShape::Poles => false,
            ClutterShape::Mixed => objects.len() % 3 != 2,
        };
        let radius = if sphere {
            rng.random_range(0.6..1.5)
        } else {
            rng.random_range(0.08..0.2)
        };
        // Keep clutter off the façades and clear of the sensor path.
        let y_max = half - radius - 0.5;
        let y_min = 1.5 + radius;
        if y_max <= y_min {
            return Err(invalid("street_width_m", "street too narrow for clutter"));
        }
        let x = rng.random_range(0.0..spec.street_length_m);
        let y = rng.random_range(y_min..y_max) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let object = if sphere {
            ClutterObject::Sphere {
                center: Vector3::new(x, y, radius + rng.random_range(1.5..4.0)),
                radius,
            }
        } else {
            ClutterObject::Pole {
                base: Vector3::new(x, y, 0.0),
                radius,
                height: rng.random_range(3.0..8.0),
            }
        };
        area += object.area();
        objects.push(object);
    }
    Ok(objects)
}

fn street_trajectory(length: f64, speed: f64, height: f64) -> Result<Trajectory> {
    let duration = length / speed;
    let n = libm::ceil(duration / 0.1) as usize;
    let samples = (0..=n)
        .map(|i| {
            let t = (i as f64 * 0.1).min(duration);
            TrajectorySample {
                gps_time: t,
                position: Vector3::new(speed * t, 0.0, height),
            }
        })
        .collect::<Vec<_>>();
    // The final step can collapse onto the previous sample when the duration
    // is a multiple of 0.1 s up to rounding.
    let mut dedup: Vec<TrajectorySample> = Vec::with_capacity(samples.len());
    for s in samples {
        match dedup.last() {
            Some(last) if s.gps_time <= last.gps_time + 1e-12 => {}
            _ => dedup.push(s),
        }
    }
    Trajectory::new(dedup)
}

/// Draws one scan of `layout`: a jittered grid on every surface, uniform
/// samples on clutter, isotropic Gaussian noise, `gps_time = x / speed`.
pub fn sample_layout(layout: &Layout, scan_seed: u64) -> Result<Scene> {
    let s = layout.spacing_m;
    let noise = Gauss::new(0.0, layout.noise_sigma_m.max(0.0))
        .map_err(|_| invalid("noise_sigma_m", "must be finite"))?;
    let duration = layout.trajectory.time_range().map_or(0.0, |r| r.1);
    let time_of = |p: &Vector3<f64>| (p.x / layout.speed_mps).clamp(0.0, duration);

    let mut points = Vec::new();
    let mut plane_ids = Vec::new();
    let jitter = |rng: &mut ChaCha8Rng, p: Vector3<f64>| {
        if layout.noise_sigma_m > 0.0 {
            p + Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng))
        } else {
            p
        }
    };

    for surf in &layout.surfaces {
        let mut rng = stream_rng(scan_seed, STREAM_SURFACES + surf.plane_id as u64);
        let (lu, lv) = (surf.u.norm(), surf.v.norm());
        let (du, dv) = (surf.u / lu, surf.v / lv);
        let nu = libm::ceil(lu / s) as usize;
        let nv = libm::ceil(lv / s) as usize;
        for i in 0..nu {
            for j in 0..nv {
                let a = (i as f64 + rng.random::<f64>()) * s;
                let b = (j as f64 + rng.random::<f64>()) * s;
                if a > lu || b > lv {
                    continue;
                }
                let p = jitter(&mut rng, surf.origin + du * a + dv * b);
                points.push(Point3::at(p).with_time(time_of(&p)).with_label(surf.label));
                plane_ids.push(Some(surf.plane_id));
            }
        }
    }

    let total_area: f64 = layout.clutter.iter().map(ClutterObject::area).sum();
    let counts = apportion(
        &layout.clutter.iter().map(|c| c.area() / total_area).collect::<Vec<_>>(),
        layout.clutter_points,
    );
    for (k, (obj, &count)) in layout.clutter.iter().zip(&counts).enumerate() {
        let mut rng = stream_rng(scan_seed, STREAM_CLUTTER + k as u64);
        for _ in 0..count {
            let p = match *obj {
                ClutterObject::Sphere { center, radius } => {
                    let d: [f64; 3] = UnitSphere.sample(&mut rng);
                    center + Vector3::from(d) * radius
                }
                ClutterObject::Pole { base, radius, height } => {
                    let (sn, cs) = libm::sincos(rng.random_range(0.0..2.0 * PI));
                    base + Vector3::new(radius * cs, radius * sn, rng.random_range(0.0..height))
                }
            };
            let p = jitter(&mut rng, p);
            points.push(Point3::at(p).with_time(time_of(&p)).with_label(obj.label()));
            plane_ids.push(None);
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].gps_time.unwrap().total_cmp(&points[b].gps_time.unwrap()));
    let cloud = PointCloud::new("synthetic", order.iter().map(|&i| points[i]).collect());
    let plane_ids = order.iter().map(|&i| plane_ids[i]).collect();
    Ok(Scene {
        cloud,
        trajectory: layout.trajectory.clone(),
        plane_ids,
        surfaces: layout.surfaces.clone(),
    })
}

/// Largest-remainder split of `total` by `shares` (summing to 1).
fn apportion(shares: &[f64], total: usize) -> Vec<usize> {
    if shares.is_empty() {
        return Vec::new();
    }
    let raw: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| libm::floor(*r) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - counts[a] as f64;
        let fb = raw[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Layout plus one scan drawn with the layout seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    sample_layout(&generate_layout(spec)?, spec.seed)
}

/// Ground plane with asymmetric boxes, scanned from a straight path along x.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSceneSpec {
    pub size_m: f64,
    pub boxes: usize,
    pub spacing_m: f64,
    pub noise_sigma_m: f64,
    pub speed_mps: f64,
    pub seed: u64,
}

impl Default for BoxSceneSpec {
    fn default() -> Self {
        Self {
            size_m: 40.0,
            boxes: 8,
            spacing_m: 0.15,
            noise_sigma_m: 0.002,
            speed_mps: 2.0,
            seed: 0,
        }
    }
}

/// Static geometry of a box scene.
pub fn box_layout(spec: &BoxSceneSpec) -> Result<Layout> {
    if !(spec.size_m > 10.0) {
        return Err(invalid("size_m", "must exceed 10 m"));
    }
    if !(spec.spacing_m > 0.0 && spec.speed_mps > 0.0) {
        return Err(invalid("spacing_m", "spacing and speed must be positive"));
    }
    let size = spec.size_m;
    let mut rng = stream_rng(spec.seed, STREAM_LAYOUT_LEFT);
    let mut set = SurfaceSet(Vec::new());
    set.push(
        Vector3::new(0.0, -0.5 * size, 0.0),
        Vector3::new(size, 0.0, 0.0),
        Vector3::new(0.0, size, 0.0),
        labels::GROUND,
    );
    let mut placed: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while placed.len() < spec.boxes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(invalid("boxes", "could not place that many boxes"));
        }
        let (w, d) = (rng.random_range(2.0..7.0), rng.random_range(2.0..7.0));
        let h = rng.random_range(2.0..9.0);
        let x0 = rng.random_range(1.0..size - w - 1.0);
        let side = if placed.len() % 2 == 0 { 1.0 } else { -1.0 };
        let y_near = rng.random_range(3.0..(0.5 * size - d - 1.0).max(3.5));
        let y0 = if side > 0.0 { y_near } else { -y_near - d };
        let overlaps = placed
            .iter()
            .any(|&(ax, ay, aw, ad)| x0 < ax + aw + 1.0 && ax < x0 + w + 1.0 && y0 < ay + ad + 1.0 && ay < y0 + d + 1.0);
        if overlaps {
            continue;
        }
        placed.push((x0, y0, w, d));
        let o = Vector3::new(x0, y0, 0.0);
        let (ex, ey, ez) = (Vector3::new(w, 0.0, 0.0), Vector3::new(0.0, d, 0.0), Vector3::new(0.0, 0.0, h));
        set.push(o, ex, ez, labels::BUILDING);
        set.push(o + ey, ez, ex, labels::BUILDING);
        set.push(o, ez, ey, labels::BUILDING);
        set.push(o + ex, ey, ez, labels::BUILDING);
        set.push(o + ez, ex, ey, labels::BUILDING);
    }
    Ok(Layout {
        surfaces: set.0,
        clutter: Vec::new(),
        clutter_points: 0,
        trajectory: street_trajectory(size, spec.speed_mps, 2.0)?,
        speed_mps: spec.speed_mps,
        spacing_m: spec.spacing_m,
        noise_sigma_m: spec.noise_sigma_m,
    })
}

pub fn generate_box_scene(spec: &BoxSceneSpec) -> Result<Scene> {
    sample_layout(&box_layout(spec)?, spec.seed)
}

/// Random rigid motion: axis uniform on the sphere, angle uniform in
/// `[0, max_rotation_deg]`, translation direction uniform with length
/// uniform in `[0, max_translation_m]`.
pub fn random_perturbation(
    rng: &mut ChaCha8Rng,
    max_rotation_deg: f64,
    max_translation_m: f64,
) -> RigidTransform {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..=max_rotation_deg).to_radians();
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let length = rng.random_range(0.0..=max_translation_m);
    let mut t = RigidTransform::from_axis_angle(&Vector3::from(axis), angle);
    t.translation = Vector3::from(dir) * length;
    t
}

/// Piecewise-linear drift over trajectory arclength.
///
/// Knot values are `[rx, ry, rz, tx, ty, tz]` with rotations in degrees; the
/// first knot sits at arclength 0 with all values zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftProfile {
    knots: Vec<(f64, [f64; 6])>,
}

impl DriftProfile {
    pub fn new(knots: Vec<(f64, [f64; 6])>) -> Result<Self> {
        match knots.first() {
            Some((s, v)) if *s == 0.0 && v.iter().all(|x| *x == 0.0) => {}
            _ => return Err(invalid("profile", "must start at arclength 0 with zero drift")),
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("profile", "knot arclengths must increase"));
        }
        if knots.iter().flat_map(|k| k.1).any(|v| !v.is_finite()) {
            return Err(invalid("profile", "values must be finite"));
        }
        Ok(Self { knots })
    }

    /// Identically zero over `[0, length]`.
    pub fn zero(length: f64) -> Self {
        Self {
            knots: alloc::vec![(0.0, [0.0; 6]), (length.max(1e-9), [0.0; 6])],
        }
    }

    /// `tx` rises to `peak_m` at mid-length, falls to 30 % of it at three
    /// quarters and rises again to 70 % at the end; other components are zero.
    pub fn rise_fall_rise(length: f64, peak_m: f64) -> Result<Self> {
        let tx = |v: f64| [0.0, 0.0, 0.0, v, 0.0, 0.0];
        Self::new(alloc::vec![
            (0.0, [0.0; 6]),
            (0.5 * length, tx(peak_m)),
            (0.75 * length, tx(0.3 * peak_m)),
            (length, tx(0.7 * peak_m)),
        ])
    }

    pub fn knots(&self) -> &[(f64, [f64; 6])] {
        &self.knots
    }

    pub fn domain_end(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.0)
    }

    /// Interpolated components at arclength `s`; `None` outside the domain.
    pub fn at(&self, s: f64) -> Option<[f64; 6]> {
        if !(s >= 0.0 && s <= self.domain_end()) {
            return None;
        }
        let upper = self.knots.partition_point(|k| k.0 <= s);
        if upper >= self.knots.len() {
            return Some(self.knots[self.knots.len() - 1].1);
        }
        let (s0, a) = self.knots[upper - 1];
        let (s1, b) = self.knots[upper];
        let f = (s - s0) / (s1 - s0);
        Some(core::array::from_fn(|i| a[i] + (b[i] - a[i]) * f))
    }

    pub fn transform_at(&self, s: f64) -> Option<RigidTransform> {
        let v = self.at(s)?;
        Some(RigidTransform::from_euler_deg(v[0], v[1], v[2], Vector3::new(v[3], v[4], v[5])))
    }
}

/// Warps `target` point by point with the profile transform at the
/// trajectory arclength of each point's acquisition time.
pub fn apply_drift(
    target: &PointCloud,
    trajectory: &Trajectory,
    profile: &DriftProfile,
) -> Result<PointCloud> {
    if profile.domain_end() + 1e-9 < trajectory.total_length() {
        return Err(invalid("profile", "domain is shorter than the trajectory"));
    }
    let mut out = target.clone();
    for (i, p) in out.points.iter_mut().enumerate() {
        let t = p.gps_time.ok_or(Error::MissingAttribute {
            attribute: "gps_time",
            hint: "drift is applied by acquisition time",
        })?;
        let s = trajectory.arclength_at(t).min(profile.domain_end());
        let tf = profile.transform_at(s).expect("arclength within domain");
        p.position = tf.apply(&p.position);
        if let Some(normals) = out.normals.as_mut() {
            normals[i] = normals[i].map(|n| {
                crate::geometry::UnitVector3::new_unchecked(tf.rotate(&n.into_inner()))
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normals::estimate_normals;
    use alloc::vec;

    fn minimal() -> SceneSpec {
        SceneSpec {
            street_length_m: 10.0,
            street_width_m: 8.0,
            facades: FacadeLayout::continuous(6.0),
            noise_sigma_m: 0.0,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn minimal_scene_has_three_dominant_normals() {
        let scene = generate_scene(&minimal()).unwrap();
        assert_eq!(scene.surfaces.len(), 3);
        let cloud = estimate_normals(&scene.cloud, 10).unwrap();
        let mut counts = [0usize; 3];
        for n in cloud.normals.as_ref().unwrap().iter().flatten() {
            let axis = [n.x.abs(), n.y.abs(), n.z.abs()];
            let (i, v) = axis.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
            if v > 0.95 {
                counts[i] += 1;
            }
        }
        // Ground (z) and two façades (±y); nothing faces x.
        assert!(counts[2] > 1000 && counts[1] > 1000, "{counts:?}");
        assert!(counts[0] < counts[1] / 20, "{counts:?}");
    }

    #[test]
    fn clutter_free_points_lie_on_their_planes() {
        let spec = SceneSpec {
            noise_sigma_m: 0.005,
            side_streets: vec![SideStreet { x_m: 50.0, width_m: 10.0, length_m: 20.0 }],
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        for (p, id) in scene.cloud.points.iter().zip(&scene.plane_ids) {
            let s = scene.surface(id.unwrap()).unwrap();
            assert!(s.distance(&p.position).abs() < 6.0 * 0.005);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = SceneSpec {
            street_length_m: 40.0,
            clutter_fraction: 0.3,
            seed: 9,
            ..SceneSpec::default()
        };
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.cloud, c.cloud);
    }

    #[test]
    fn clutter_fraction_is_met_and_labeled() {
        let spec = SceneSpec {
            street_length_m: 40.0,
            clutter_fraction: 0.4,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let clutter = scene.plane_ids.iter().filter(|p| p.is_none()).count();
        let frac = clutter as f64 / scene.cloud.len() as f64;
        assert!((frac - 0.4).abs() < 0.01, "{frac}");
        for (p, id) in scene.cloud.points.iter().zip(&scene.plane_ids) {
            let label = p.class_label.unwrap();
            assert_eq!(id.is_none(), label == labels::VEGETATION || label == labels::POLE);
        }
    }

    #[test]
    fn points_are_time_ordered_and_consistent_with_trajectory() {
        let scene = generate_scene(&SceneSpec::default()).unwrap();
        let times: Vec<f64> = scene.cloud.points.iter().map(|p| p.gps_time.unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        let (t0, t1) = scene.trajectory.time_range().unwrap();
        assert!(t0 == 0.0 && (t1 - 25.0).abs() < 1e-9);
        for p in scene.cloud.points.iter().step_by(97) {
            let x = p.position.x.clamp(0.0, 100.0);
            assert!((scene.trajectory.position_at(p.gps_time.unwrap()).unwrap().x - x).abs() < 1e-9);
        }
    }

    #[test]
    fn contradictory_specs_are_rejected() {
        for bad in [
            SceneSpec { spacing_m: 0.0, ..minimal() },
            SceneSpec { clutter_fraction: 1.0, ..minimal() },
            SceneSpec { facade_gaps: vec![(5.0, 2.0)], ..minimal() },
            SceneSpec { facade_gaps: vec![(1.0, 5.0), (4.0, 6.0)], ..minimal() },
            SceneSpec { clutter_fraction: 0.2, street_width_m: 4.0, ..minimal() },
        ] {
            assert!(generate_scene(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn facade_gap_removes_buildings() {
        let spec = SceneSpec {
            facade_gaps: vec![(40.0, 80.0)],
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        for (p, id) in scene.cloud.points.iter().zip(&scene.plane_ids) {
            let s = scene.surface(id.unwrap()).unwrap();
            if s.label == labels::BUILDING && s.normal().x.abs() < 0.5 {
                assert!(!(40.01..79.99).contains(&p.position.x));
            }
        }
    }

    #[test]
    fn box_scene_is_deterministic_and_planar() {
        let spec = BoxSceneSpec::default();
        let a = generate_box_scene(&spec).unwrap();
        assert_eq!(a, generate_box_scene(&spec).unwrap());
        assert_eq!(a.surfaces.len(), 1 + 5 * spec.boxes);
    }

    #[test]
    fn zero_and_constant_profiles() {
        let scene = generate_scene(&SceneSpec { street_length_m: 20.0, ..SceneSpec::default() }).unwrap();
        let same = apply_drift(&scene.cloud, &scene.trajectory, &DriftProfile::zero(20.0)).unwrap();
        assert_eq!(same, scene.cloud);
        let shift = DriftProfile::new(vec![(0.0, [0.0; 6]), (1e-6, [0.0, 0.0, 0.0, 0.3, 0.0, 0.0]), (20.0, [0.0, 0.0, 0.0, 0.3, 0.0, 0.0])]).unwrap();
        let moved = apply_drift(&scene.cloud, &scene.trajectory, &shift).unwrap();
        for (a, b) in scene.cloud.points.iter().zip(&moved.points) {
            if a.gps_time.unwrap() > 0.0 {
                assert!((b.position - a.position - Vector3::new(0.3, 0.0, 0.0)).norm() < 1e-9);
            }
        }
        assert!(apply_drift(&scene.cloud, &scene.trajectory, &DriftProfile::zero(10.0)).is_err());
    }

    #[test]
    fn profile_interpolates_and_validates() {
        let p = DriftProfile::new(vec![(0.0, [0.0; 6]), (100.0, [0.0, 0.0, 0.0, 0.05, 0.0, 0.0])]).unwrap();
        assert!((p.at(50.0).unwrap()[3] - 0.025).abs() < 1e-15);
        assert_eq!(p.at(100.0).unwrap()[3], 0.05);
        assert!(p.at(100.1).is_none());
        assert!(DriftProfile::new(vec![(1.0, [0.0; 6])]).is_err());
        assert!(DriftProfile::new(vec![(0.0, [0.1, 0.0, 0.0, 0.0, 0.0, 0.0])]).is_err());
        assert!(DriftProfile::new(vec![(0.0, [0.0; 6]), (0.0, [0.0; 6])]).is_err());
    }

    #[test]
    fn rise_fall_rise_peaks_once_at_mid_length() {
        let p = DriftProfile::rise_fall_rise(200.0, 0.007).unwrap();
        let tx: Vec<f64> = (0..=200).map(|s| p.at(s as f64).unwrap()[3]).collect();
        let peak = tx.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, 0.007);
        assert_eq!(tx.iter().position(|&v| v == peak), Some(100));
        assert!(tx[..=100].windows(2).all(|w| w[1] > w[0]));
        assert!(tx[100..=150].windows(2).all(|w| w[1] < w[0]));
        assert!(tx[150..].windows(2).all(|w| w[1] > w[0]));
        assert!(p.at(120.0).unwrap().iter().enumerate().all(|(i, v)| i == 3 || *v == 0.0));
    }

    #[test]
    fn apportion_sums_to_total() {
        assert_eq!(apportion(&[0.5, 0.25, 0.25], 7).iter().sum::<usize>(), 7);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
    }
}
