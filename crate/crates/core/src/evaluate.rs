//! Registration accuracy on small planar patches, measured with a
//! fixed-normal M3C2 distance and summarized per axis.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::config::EvalConfig;
use crate::error::{invalid, Error, Result};
use crate::fine::{classify_planar, merged_voxel_grid, PlanarParams};
use crate::geometry::{Aabb, PointCloud, UnitVector3};

/// Axis probed by a patch: X along the street, Y along side streets, Z up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }

    pub fn from_label(s: &str) -> Option<Axis> {
        match s.trim() {
            "X" | "x" => Some(Axis::X),
            "Y" | "y" => Some(Axis::Y),
            "Z" | "z" => Some(Axis::Z),
            _ => None,
        }
    }

    /// Axis closest to `v`.
    pub fn dominant(v: &Vector3<f64>) -> Axis {
        Axis::ALL[v.iamax()]
    }
}

/// Cylinder along `normal` through `center`, `radius` wide and reaching
/// `depth` to either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchDefinition {
    pub center: Vector3<f64>,
    pub normal: UnitVector3,
    pub axis: Axis,
    pub radius_m: f64,
    pub depth_m: f64,
}

impl PatchDefinition {
    pub fn new(center: Vector3<f64>, normal: UnitVector3, axis: Axis, radius_m: f64, depth_m: f64) -> Result<Self> {
        if !(radius_m > 0.0 && depth_m > 0.0) {
            return Err(invalid("patch", "radius and depth must be positive"));
        }
        if normal.dot(&axis.unit()).abs() < 0.8 {
            return Err(invalid("patch", alloc::format!("normal is not aligned with axis {}", axis.label())));
        }
        Ok(Self {
            center,
            normal,
            axis,
            radius_m,
            depth_m,
        })
    }

    /// Height along the normal of every member of `cloud`.
    fn heights<'a>(&'a self, cloud: &'a PointCloud) -> impl Iterator<Item = f64> + 'a {
        let r2 = self.radius_m * self.radius_m;
        cloud.points.iter().filter_map(move |p| {
            let d = p.position - self.center;
            let h = self.normal.dot(&d);
            (libm::fabs(h) <= self.depth_m && d.norm_squared() - h * h <= r2).then_some(h)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOutcome {
    pub patch: PatchDefinition,
    /// Signed distance from reference to registered; `None` when either side
    /// has too few members.
    pub distance: Option<f64>,
    pub reference_members: usize,
    pub registered_members: usize,
}

/// Signed M3C2 distance of a patch: mean height of the registered members
/// minus mean height of the reference members, along the patch normal.
pub fn m3c2_patch_distance(
    reference: &PointCloud,
    registered: &PointCloud,
    patch: &PatchDefinition,
    min_members: usize,
) -> PatchOutcome {
    let mean = |cloud| {
        let (sum, n) = patch.heights(cloud).fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
        (if n == 0 { 0.0 } else { sum / n as f64 }, n)
    };
    let (ref_mean, ref_n) = mean(reference);
    let (reg_mean, reg_n) = mean(registered);
    let defined = ref_n >= min_members.max(1) && reg_n >= min_members.max(1);
    PatchOutcome {
        patch: *patch,
        distance: defined.then_some(reg_mean - ref_mean),
        reference_members: ref_n,
        registered_members: reg_n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisStat {
    /// Mean of |distance| (or of the signed distance in signed mode);
    /// `None` when no patch of this axis is defined.
    pub mean_m: Option<f64>,
    pub valid: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisErrorSummary {
    /// Indexed by [`Axis::index`].
    pub axes: [AxisStat; 3],
    /// Mean over the axes that have a value.
    pub fragment_mean_m: Option<f64>,
    pub patches: Vec<PatchOutcome>,
}

impl AxisErrorSummary {
    pub fn axis(&self, axis: Axis) -> &AxisStat {
        &self.axes[axis.index()]
    }

    /// Defined per-patch values as aggregated (absolute unless signed).
    pub fn values(&self, signed: bool) -> Vec<f64> {
        self.patches
            .iter()
            .filter_map(|p| p.distance)
            .map(|d| if signed { d } else { libm::fabs(d) })
            .collect()
    }
}

/// Per-axis and per-fragment summary over `patches`.
///
/// Axes without a defined patch are left out of the fragment mean with a
/// warning.
pub fn evaluate_fragment(
    reference: &PointCloud,
    registered: &PointCloud,
    patches: &[PatchDefinition],
    cfg: &EvalConfig,
) -> AxisErrorSummary {
    let outcomes: Vec<PatchOutcome> = patches
        .iter()
        .map(|p| m3c2_patch_distance(reference, registered, p, cfg.min_members))
        .collect();
    summarize(outcomes, cfg.signed)
}

/// Aggregates already-computed patch outcomes.
pub fn summarize(outcomes: Vec<PatchOutcome>, signed: bool) -> AxisErrorSummary {
    let mut sums = [0.0; 3];
    let mut axes = [AxisStat::default(); 3];
    for o in &outcomes {
        let a = o.patch.axis.index();
        match o.distance {
            Some(d) => {
                sums[a] += if signed { d } else { libm::fabs(d) };
                axes[a].valid += 1;
            }
            None => axes[a].undefined += 1,
        }
    }
    for (stat, sum) in axes.iter_mut().zip(sums) {
        stat.mean_m = (stat.valid > 0).then(|| sum / stat.valid as f64);
    }
    let present: Vec<f64> = axes.iter().filter_map(|s| s.mean_m).collect();
    for axis in Axis::ALL {
        let s = &axes[axis.index()];
        if s.mean_m.is_none() && s.undefined > 0 {
            log::warn!("evaluate: no valid patch for axis {} ({} undefined)", axis.label(), s.undefined);
        }
    }
    AxisErrorSummary {
        axes,
        fragment_mean_m: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        patches: outcomes,
    }
}

/// Mean of the fragment means that exist.
pub fn overall_mean(summaries: &[AxisErrorSummary]) -> Option<f64> {
    let means: Vec<f64> = summaries.iter().filter_map(|s| s.fragment_mean_m).collect();
    (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
}

/// Up to `per_axis` patches per axis, centered on planar voxel cells of
/// `reference` inside `region`.
///
/// Cells qualify when their mean normal is within `cfg.axis_alignment` of
/// the axis (|n̄·e| ≥ threshold). Among them, patches are picked by
/// farthest-point sampling on the cell centroids, starting from the cell
/// nearest to the candidates' centroid.
pub fn auto_generate_patches(
    reference: &PointCloud,
    region: Option<&Aabb>,
    per_axis: usize,
    planar: &PlanarParams,
    voxel_edge_m: f64,
    cfg: &EvalConfig,
) -> Result<Vec<PatchDefinition>> {
    let Some(normals) = reference.normals.as_deref() else {
        return Err(Error::MissingAttribute {
            attribute: "normals",
            hint: "estimate reference normals before generating patches",
        });
    };
    if per_axis == 0 {
        return Ok(Vec::new());
    }
    let positions = reference.positions();
    let mut grid = merged_voxel_grid(&positions, &[], voxel_edge_m)?;
    classify_planar(&mut grid, normals, &[], planar);

    let mut candidates: [Vec<(Vector3<f64>, UnitVector3)>; 3] = Default::default();
    for cell in grid.cells.iter().filter(|c| c.planar) {
        let Some(n) = cell.mean_normal else { continue };
        let centroid = cell.source.iter().map(|&i| positions[i]).sum::<Vector3<f64>>() / cell.source.len() as f64;
        if region.is_some_and(|r| !r.contains(&centroid)) {
            continue;
        }
        let axis = Axis::dominant(&n.into_inner().abs());
        if n.dot(&axis.unit()).abs() >= cfg.axis_alignment {
            candidates[axis.index()].push((centroid, n));
        }
    }

    let mut patches = Vec::new();
    for axis in Axis::ALL {
        let cands = &candidates[axis.index()];
        let picked = farthest_point_sample(&cands.iter().map(|c| c.0).collect::<Vec<_>>(), per_axis);
        if picked.len() < per_axis {
            log::warn!(
                "evaluate: {} of {per_axis} requested patches available for axis {}",
                picked.len(),
                axis.label()
            );
        }
        for i in picked {
            let (center, normal) = cands[i];
            patches.push(PatchDefinition::new(center, normal, axis, cfg.patch_radius_m, cfg.patch_depth_m)?);
        }
    }
    Ok(patches)
}

/// Indices of up to `count` points, each the farthest from those already
/// chosen. Ties go to the lower index.
fn farthest_point_sample(points: &[Vector3<f64>], count: usize) -> Vec<usize> {
    if points.is_empty() || count == 0 {
        return Vec::new();
    }
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let first = argmax(points.iter().map(|p| -(p - mean).norm_squared()));
    let mut chosen = alloc::vec![first];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while chosen.len() < count.min(points.len()) {
        let next = argmax(dist.iter().copied());
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    chosen
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, RigidTransform};
    use crate::normals::estimate_normals;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn plane(n: usize, seed: u64, offset: f64, sigma: f64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let pts: Vec<_> = (0..n)
            .map(|_| {
                let dz = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), offset + dz)
            })
            .collect();
        PointCloud::from_positions("plane", &pts)
    }

    fn z_patch() -> PatchDefinition {
        PatchDefinition::new(Vector3::zeros(), UnitVector3::new(Vector3::z()).unwrap(), Axis::Z, 0.5, 0.5).unwrap()
    }

    #[test]
    fn coincident_planes_have_zero_distance() {
        let a = plane(500, 1, 0.0, 0.0);
        let d = m3c2_patch_distance(&a, &a, &z_patch(), 10).distance.unwrap();
        assert!(d.abs() <= 1e-12);
    }

    #[test]
    fn offset_planes() {
        let a = plane(500, 1, 0.0, 0.0);
        let b = plane(500, 2, 0.05, 0.0);
        assert!((m3c2_patch_distance(&a, &b, &z_patch(), 10).distance.unwrap() - 0.05).abs() <= 1e-9);
        // σ = 5 mm on ~270 members per side: 3σ of the difference ≈ 1.3 mm
        // worst case; the tolerance is 1 mm and holds for these seeds.
        let a = plane(500, 3, 0.0, 0.005);
        let b = plane(500, 4, 0.05, 0.005);
        let d = m3c2_patch_distance(&a, &b, &z_patch(), 10).distance.unwrap();
        assert!((d - 0.05).abs() <= 1e-3, "{d}");
    }

    #[test]
    fn sparse_patches_are_undefined() {
        let a = plane(500, 1, 0.0, 0.0);
        let b = plane(12, 2, 0.0, 0.0);
        let o = m3c2_patch_distance(&a, &b, &z_patch(), 10);
        assert!(o.registered_members < 10 && o.distance.is_none());
        // Points beyond the depth do not count.
        let far = plane(500, 2, 0.6, 0.0);
        assert_eq!(m3c2_patch_distance(&a, &far, &z_patch(), 10).registered_members, 0);
    }

    #[test]
    fn patch_axis_must_match_normal() {
        let n = UnitVector3::new(Vector3::new(1.0, 0.0, 1.0)).unwrap();
        assert!(PatchDefinition::new(Vector3::zeros(), n, Axis::Z, 0.5, 0.5).is_err());
        assert!(PatchDefinition::new(Vector3::zeros(), UnitVector3::new(Vector3::z()).unwrap(), Axis::Z, 0.0, 0.5).is_err());
    }

    /// Plane through `center` with normal `axis`, sampled on a 5 cm grid.
    fn axis_plane(center: Vector3<f64>, axis: Axis) -> Vec<Vector3<f64>> {
        let n = axis.unit();
        let u = if axis == Axis::X { Vector3::y() } else { Vector3::x() };
        let v = n.cross(&u);
        let mut out = Vec::new();
        for i in -12..=12 {
            for j in -12..=12 {
                out.push(center + u * (i as f64 * 0.05) + v * (j as f64 * 0.05));
            }
        }
        out
    }

    #[test]
    fn axis_means_are_plain_arithmetic() {
        let centers = [Vector3::new(0.0, 5.0, 0.0), Vector3::new(5.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 5.0)];
        let offsets = [0.01, -0.01, 0.0];
        let mut reference = Vec::new();
        let mut registered = Vec::new();
        let mut patches = Vec::new();
        for (axis, (c, off)) in Axis::ALL.iter().zip(centers.iter().zip(offsets)) {
            reference.extend(axis_plane(*c, *axis));
            registered.extend(axis_plane(c + axis.unit() * off, *axis));
            patches.push(PatchDefinition::new(*c, UnitVector3::new(axis.unit()).unwrap(), *axis, 0.5, 0.5).unwrap());
        }
        let s = evaluate_fragment(
            &PointCloud::from_positions("ref", &reference),
            &PointCloud::from_positions("reg", &registered),
            &patches,
            &EvalConfig::default(),
        );
        let means: Vec<f64> = Axis::ALL.iter().map(|a| s.axis(*a).mean_m.unwrap()).collect();
        assert!((means[0] - 0.01).abs() < 1e-12 && (means[1] - 0.01).abs() < 1e-12 && means[2].abs() < 1e-12);
        assert!((s.fragment_mean_m.unwrap() - 0.02 / 3.0).abs() < 1e-12);
        let signed = evaluate_fragment(
            &PointCloud::from_positions("ref", &reference),
            &PointCloud::from_positions("reg", &registered),
            &patches,
            &EvalConfig { signed: true, ..EvalConfig::default() },
        );
        assert!((signed.axis(Axis::Y).mean_m.unwrap() + 0.01).abs() < 1e-12);
    }

    #[test]
    fn all_zero_and_missing_axes() {
        let a = plane(500, 1, 0.0, 0.0);
        let s = evaluate_fragment(&a, &a, &[z_patch(), z_patch()], &EvalConfig::default());
        assert_eq!(s.axis(Axis::Z).mean_m, Some(0.0));
        assert_eq!(s.axis(Axis::X).mean_m, None);
        assert_eq!(s.fragment_mean_m, Some(0.0));
        let empty = PointCloud::default();
        let s = evaluate_fragment(&a, &empty, &[z_patch()], &EvalConfig::default());
        assert_eq!((s.axis(Axis::Z).undefined, s.fragment_mean_m), (1, None));
        assert_eq!(overall_mean(&[s]), None);
    }

    fn box_reference() -> PointCloud {
        use crate::synth::{generate_box_scene, BoxSceneSpec};
        let scene = generate_box_scene(&BoxSceneSpec {
            size_m: 24.0,
            boxes: 5,
            spacing_m: 0.1,
            ..BoxSceneSpec::default()
        })
        .unwrap();
        estimate_normals(&scene.cloud, 10).unwrap()
    }

    #[test]
    fn residual_transform_matches_independent_recomputation() {
        let reference = box_reference();
        let patches =
            auto_generate_patches(&reference, None, 20, &PlanarParams::default(), 1.0, &EvalConfig::default()).unwrap();
        for axis in Axis::ALL {
            assert!(patches.iter().any(|p| p.axis == axis), "no {axis:?} patch");
        }
        let residual = RigidTransform::from_euler_deg(0.02, -0.01, 0.03, Vector3::new(0.004, -0.003, 0.002));
        let registered = apply_transform(&reference, &residual);
        let s = evaluate_fragment(&reference, &registered, &patches, &EvalConfig::default());

        // Oracle: explicit loops over both clouds per patch.
        let mut per_axis = [(0.0, 0usize); 3];
        for p in &patches {
            let side = |c: &PointCloud| {
                let mut sum = 0.0;
                let mut n = 0;
                for q in &c.points {
                    let d = q.position - p.center;
                    let h = d.dot(&p.normal);
                    let radial = (d - p.normal.into_inner() * h).norm();
                    if h.abs() <= p.depth_m && radial <= p.radius_m {
                        sum += h;
                        n += 1;
                    }
                }
                (sum / n as f64, n)
            };
            let ((a, na), (b, nb)) = (side(&reference), side(&registered));
            if na >= 10 && nb >= 10 {
                per_axis[p.axis.index()].0 += (b - a).abs();
                per_axis[p.axis.index()].1 += 1;
            }
        }
        for axis in Axis::ALL {
            let (sum, n) = per_axis[axis.index()];
            assert_eq!(s.axis(axis).valid, n);
            assert!((s.axis(axis).mean_m.unwrap() - sum / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_only_reference_yields_only_z_patches() {
        let mut pts = Vec::new();
        for i in 0..100 {
            for j in 0..100 {
                pts.push(Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        let ground = estimate_normals(&PointCloud::from_positions("g", &pts), 10).unwrap();
        let p = auto_generate_patches(&ground, None, 20, &PlanarParams::default(), 1.0, &EvalConfig::default()).unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.iter().all(|p| p.axis == Axis::Z));
        // Farthest-point sampling spreads the picks out.
        let min_gap = p
            .iter()
            .enumerate()
            .flat_map(|(i, a)| p[i + 1..].iter().map(move |b| (a.center - b.center).norm()))
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap > 1.5, "{min_gap}");
        assert!(auto_generate_patches(&ground, None, 0, &PlanarParams::default(), 1.0, &EvalConfig::default())
            .unwrap()
            .is_empty());
        let bare = PointCloud::from_positions("g", &pts);
        assert!(auto_generate_patches(&bare, None, 5, &PlanarParams::default(), 1.0, &EvalConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn distance_properties(seed in 0u64..500, delta in -0.3f64..0.3, nx in -0.3f64..0.3) {
            let a = plane(400, seed, 0.0, 0.0);
            let b = plane(400, seed + 1000, 0.02, 0.0);
            let n = UnitVector3::new(Vector3::new(nx, 0.0, 1.0)).unwrap();
            let patch = PatchDefinition::new(Vector3::zeros(), n, Axis::Z, 0.4, 0.5).unwrap();
            let ab = m3c2_patch_distance(&a, &b, &patch, 10).distance.unwrap();
            let ba = m3c2_patch_distance(&b, &a, &patch, 10).distance.unwrap();
            prop_assert!((ab + ba).abs() <= 1e-12);

            // Translating along the normal of a z-patch on z-planes.
            let zp = z_patch();
            let shifted = apply_transform(&b, &RigidTransform::from_translation(Vector3::new(0.0, 0.0, delta)));
            // Only meaningful when no member crosses the depth limit.
            if b.points.iter().all(|p| (p.position.z + delta).abs() <= 0.5) {
                let base = m3c2_patch_distance(&a, &b, &zp, 10).distance.unwrap();
                let moved = m3c2_patch_distance(&a, &shifted, &zp, 10).distance.unwrap();
                prop_assert!((moved - base - delta).abs() <= 1e-9);
            }
        }

        #[test]
        fn aggregation_ignores_patch_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let outcomes: Vec<PatchOutcome> = (0..30).map(|i| {
                let axis = Axis::ALL[i % 3];
                PatchOutcome {
                    patch: PatchDefinition::new(Vector3::zeros(), UnitVector3::new(axis.unit()).unwrap(), axis, 0.5, 0.5).unwrap(),
                    distance: (i % 7 != 0).then(|| rng.random_range(-0.02..0.02)),
                    reference_members: 20,
                    registered_members: 20,
                }
            }).collect();
            let mut shuffled = outcomes.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let (a, b) = (summarize(outcomes, false), summarize(shuffled, false));
            for axis in Axis::ALL {
                let (x, y) = (a.axis(axis), b.axis(axis));
                prop_assert_eq!((x.valid, x.undefined), (y.valid, y.undefined));
                prop_assert!((x.mean_m.unwrap() - y.mean_m.unwrap()).abs() <= 1e-15);
            }
        }
    }
}
