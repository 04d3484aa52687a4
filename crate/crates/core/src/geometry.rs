//! Points, clouds, bounding boxes and rigid transforms.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{invalid, Result};

/// A single measurement. Coordinates are in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub position: Vector3<f64>,
    /// Acquisition time in seconds.
    pub gps_time: Option<f64>,
    pub class_label: Option<u16>,
    pub intensity: Option<f64>,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::at(Vector3::new(x, y, z))
    }

    pub fn at(position: Vector3<f64>) -> Self {
        Self {
            position,
            gps_time: None,
            class_label: None,
            intensity: None,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.gps_time = Some(t);
        self
    }

    pub fn with_label(mut self, label: u16) -> Self {
        self.class_label = Some(label);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
    }
}

/// A direction of unit Euclidean length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Normalizes `v`; returns `None` for zero or non-finite input.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if n > 1e-300 && n.is_finite() {
            Some(Self(v / n))
        } else {
            None
        }
    }

    pub const fn new_unchecked(v: Vector3<f64>) -> Self {
        Self(v)
    }

    pub const X: Self = Self(Vector3::new(1.0, 0.0, 0.0));
    pub const Y: Self = Self(Vector3::new(0.0, 1.0, 0.0));
    pub const Z: Self = Self(Vector3::new(0.0, 0.0, 1.0));

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn dot(&self, other: &Vector3<f64>) -> f64 {
        self.0.dot(other)
    }

    pub fn flipped(self) -> Self {
        Self(-self.0)
    }
}

impl core::ops::Deref for UnitVector3 {
    type Target = Vector3<f64>;
    fn deref(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Per-point normal; `None` marks a degenerate neighborhood.
pub type Normal = Option<UnitVector3>;

/// Ordered point set with optional per-point normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub name: String,
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Normal>>,
}

impl PointCloud {
    pub fn new(name: impl Into<String>, points: Vec<Point3>) -> Self {
        Self {
            name: name.into(),
            points,
            normals: None,
        }
    }

    pub fn from_positions(name: impl Into<String>, positions: &[Vector3<f64>]) -> Self {
        Self::new(name, positions.iter().map(|p| Point3::at(*p)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        self.points[i].position
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn normal(&self, i: usize) -> Normal {
        self.normals.as_ref().and_then(|n| n[i])
    }

    pub fn with_normals(mut self, normals: Vec<Normal>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(invalid(
                "normals",
                alloc::format!("{} normals for {} points", normals.len(), self.points.len()),
            ));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn has_times(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.gps_time.is_some())
    }

    pub fn has_labels(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.class_label.is_some())
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(Point3::is_finite)
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(self.points.iter().map(|p| &p.position))
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.position).sum();
        Some(sum / self.points.len() as f64)
    }

    /// Copy of the points at `indices`, normals included.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            name: self.name.clone(),
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn slice(&self, range: Range<usize>) -> PointCloud {
        PointCloud {
            name: self.name.clone(),
            points: self.points[range.clone()].to_vec(),
            normals: self.normals.as_ref().map(|n| n[range].to_vec()),
        }
    }

    /// Stable sort by acquisition time; points without time go last.
    pub fn sort_by_time(&mut self) {
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| {
            let ta = self.points[a].gps_time.unwrap_or(f64::INFINITY);
            let tb = self.points[b].gps_time.unwrap_or(f64::INFINITY);
            ta.total_cmp(&tb)
        });
        *self = self.select(&order);
    }

    /// Points inside `bounds` (inclusive).
    pub fn crop(&self, bounds: &Aabb) -> PointCloud {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| bounds.contains(&self.points[i].position))
            .collect();
        self.select(&idx)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min_corner: Vector3<f64>,
    pub max_corner: Vector3<f64>,
}

impl Aabb {
    pub fn new(min_corner: Vector3<f64>, max_corner: Vector3<f64>) -> Self {
        Self {
            min_corner: min_corner.inf(&max_corner),
            max_corner: max_corner.sup(&min_corner),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Self {
            min_corner: lo,
            max_corner: hi,
        })
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min_corner: self.min_corner.inf(&other.min_corner),
            max_corner: self.max_corner.sup(&other.max_corner),
        }
    }

    pub fn dilate(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb {
            min_corner: self.min_corner - m,
            max_corner: self.max_corner + m,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min_corner[k] && p[k] <= self.max_corner[k])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max_corner - self.min_corner
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min_corner + self.max_corner) * 0.5
    }
}

/// Rotation angles in degrees for `R = Rz(rz) * Ry(ry) * Rx(rx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    /// Set when |ry| > 89°, where rx and rz become poorly separated.
    pub near_gimbal_lock: bool,
}

/// Element of SE(3): `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality and handedness to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
        };
        if !t.is_valid(1e-9) {
            return Err(invalid("rotation", "not a proper rotation matrix"));
        }
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (Rodrigues).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self {
            rotation: rotation_from_rotvec(&(axis.normalize() * angle)),
            translation: Vector3::zeros(),
        }
    }

    /// Inverse of [`RigidTransform::to_euler`]; angles in degrees.
    pub fn from_euler_deg(rx: f64, ry: f64, rz: f64, translation: Vector3<f64>) -> Self {
        let (sx, cx) = libm::sincos(rx.to_radians());
        let (sy, cy) = libm::sincos(ry.to_radians());
        let (sz, cz) = libm::sincos(rz.to_radians());
        let rot_x = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
        let rot_y = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rot_z = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation: rot_z * rot_y * rot_x,
            translation,
        }
    }

    /// Left-multiplicative exponential update: `exp([omega, v]) * self`.
    pub fn left_update(&self, omega: &Vector3<f64>, v: &Vector3<f64>) -> Self {
        let delta = Self {
            rotation: rotation_from_rotvec(omega),
            translation: *v,
        };
        delta.compose(self)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let rtr = self.rotation.transpose() * self.rotation;
        let ortho = (rtr - Matrix3::identity()).iter().all(|e| e.abs() <= tol);
        ortho
            && (self.rotation.determinant() - 1.0).abs() <= tol
            && self.translation.iter().all(|c| c.is_finite())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_euler(&self) -> EulerAngles {
        let r = &self.rotation;
        let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
        let ry = libm::asin(sy);
        let (rx, rz) = if libm::fabs(sy) < 1.0 - 1e-12 {
            (
                libm::atan2(r[(2, 1)], r[(2, 2)]),
                libm::atan2(r[(1, 0)], r[(0, 0)]),
            )
        } else {
            // Gimbal lock: only rx ∓ rz is observable; put everything in rx.
            (libm::atan2(-r[(1, 2)], r[(1, 1)]), 0.0)
        };
        let ry_deg = ry.to_degrees();
        EulerAngles {
            rx: rx.to_degrees(),
            ry: ry_deg,
            rz: rz.to_degrees(),
            near_gimbal_lock: libm::fabs(ry_deg) > 89.0,
        }
    }

    /// Geodesic rotation angle in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        libm::acos(c).to_degrees()
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// 16 entries of the homogeneous matrix in row-major order.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix4();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(v: &[f64; 16]) -> Result<Self> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let translation = Vector3::new(v[3], v[7], v[11]);
        if v[12] != 0.0 || v[13] != 0.0 || v[14] != 0.0 || v[15] != 1.0 {
            return Err(invalid("transform", "last row must be 0 0 0 1"));
        }
        Self::new(rotation, translation)
    }
}

/// Rodrigues formula for a rotation vector (axis * angle in radians).
pub fn rotation_from_rotvec(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-12 {
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let (s, c) = libm::sincos(theta);
    Matrix3::identity() + k * (s / theta) + k * k * ((1.0 - c) / (theta * theta))
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Maps positions through `t`, rotating normals and preserving attributes.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    let points = cloud
        .points
        .iter()
        .map(|p| Point3 {
            position: t.apply(&p.position),
            ..*p
        })
        .collect();
    let normals = cloud.normals.as_ref().map(|ns| {
        ns.iter()
            .map(|n| n.map(|n| UnitVector3::new_unchecked(t.rotate(&n))))
            .collect()
    });
    PointCloud {
        name: cloud.name.clone(),
        points,
        normals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = Vector3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        );
        let mut r = RigidTransform::from_axis_angle(&axis, rng.random_range(-3.0..3.0));
        r.translation = t;
        r
    }

    #[test]
    fn identity_transform_keeps_positions_bitwise() {
        let cloud = PointCloud::new(
            "c",
            alloc::vec![Point3::new(1.25, -3.5, 7.0).with_time(4.0).with_label(2)],
        );
        let out = apply_transform(&cloud, &RigidTransform::identity());
        assert_eq!(out.points, cloud.points);
    }

    #[test]
    fn translation_and_rotation_examples() {
        let cloud = PointCloud::new("c", alloc::vec![Point3::new(0.0, 0.0, 0.0)]);
        let out = apply_transform(
            &cloud,
            &RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0)),
        );
        assert_eq!(out.points[0].position, Vector3::new(1.0, 0.0, 0.0));

        let rz = RigidTransform::from_euler_deg(0.0, 0.0, 90.0, Vector3::zeros());
        let p = rz.apply(&Vector3::new(1.0, 0.0, 0.0));
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn normals_are_rotated_and_attributes_kept() {
        let cloud = PointCloud::new("c", alloc::vec![Point3::new(1.0, 2.0, 3.0).with_time(9.5)])
            .with_normals(alloc::vec![Some(UnitVector3::X), ])
            .unwrap();
        let rz = RigidTransform::from_euler_deg(0.0, 0.0, 90.0, Vector3::new(0.0, 0.0, 1.0));
        let out = apply_transform(&cloud, &rz);
        assert_eq!(out.points[0].gps_time, Some(9.5));
        let n = out.normal(0).unwrap();
        assert!((n.into_inner() - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_transform(&mut rng);
        let b = random_transform(&mut rng);
        let ab = a.compose(&b);
        for _ in 0..100 {
            let p = Vector3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            assert!((ab.apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-10);
        }
        let id = a.compose(&RigidTransform::identity());
        assert_eq!(id, a);
        let round = a.compose(&a.inverse());
        assert!((round.to_matrix4() - Matrix4::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0)).inverse();
        assert_eq!(t.translation, Vector3::new(-1.0, -2.0, -3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_transform(&mut rng);
            let round = a.inverse().compose(&a);
            assert!((round.to_matrix4() - Matrix4::identity()).abs().max() < 1e-10);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (a, b, c) = (
                random_transform(&mut rng),
                random_transform(&mut rng),
                random_transform(&mut rng),
            );
            let l = a.compose(&b).compose(&c).to_matrix4();
            let r = a.compose(&b.compose(&c)).to_matrix4();
            assert!((l - r).abs().max() < 1e-9);
        }
    }

    #[test]
    fn euler_examples() {
        let e = RigidTransform::identity().to_euler();
        assert_eq!((e.rx, e.ry, e.rz), (0.0, 0.0, 0.0));
        let e = RigidTransform::from_euler_deg(0.0, 0.0, 30.0, Vector3::zeros()).to_euler();
        assert!(e.rx.abs() < 1e-9 && e.ry.abs() < 1e-9 && (e.rz - 30.0).abs() < 1e-9);
        let e = RigidTransform::from_euler_deg(10.0, 89.5, -20.0, Vector3::zeros()).to_euler();
        assert!(e.near_gimbal_lock);
    }

    #[test]
    fn euler_round_trip_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let (rx, ry, rz) = (
                rng.random_range(-45.0..45.0),
                rng.random_range(-45.0..45.0),
                rng.random_range(-45.0..45.0),
            );
            let t = RigidTransform::from_euler_deg(rx, ry, rz, Vector3::zeros());
            // Oracle: the elementary factorization, written out independently.
            let (a, b, c) = (
                f64::to_radians(rx),
                f64::to_radians(ry),
                f64::to_radians(rz),
            );
            let expected_r20 = -libm::sin(b);
            let expected_r21 = libm::cos(b) * libm::sin(a);
            let expected_r10 = libm::sin(c) * libm::cos(b);
            assert!((t.rotation[(2, 0)] - expected_r20).abs() < 1e-12);
            assert!((t.rotation[(2, 1)] - expected_r21).abs() < 1e-12);
            assert!((t.rotation[(1, 0)] - expected_r10).abs() < 1e-12);
            let e = t.to_euler();
            assert!((e.rx - rx).abs() < 1e-6);
            assert!((e.ry - ry).abs() < 1e-6);
            assert!((e.rz - rz).abs() < 1e-6);
            assert!(!e.near_gimbal_lock);
        }
    }

    #[test]
    fn row_major_round_trip_and_validation() {
        let t = RigidTransform::from_euler_deg(3.0, -4.0, 5.0, Vector3::new(1.0, 2.0, 3.0));
        let back = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(back, t);
        let mut bad = t.to_row_major();
        bad[0] = 2.0;
        assert!(RigidTransform::from_row_major(&bad).is_err());
    }

    #[test]
    fn aabb_and_crop() {
        let cloud = PointCloud::from_positions(
            "c",
            &[Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, -1.0, 5.0)],
        );
        let b = cloud.aabb().unwrap();
        assert_eq!(b.min_corner, Vector3::new(0.0, -1.0, 0.0));
        assert_eq!(b.max_corner, Vector3::new(2.0, 0.0, 5.0));
        let small = Aabb::new(Vector3::new(-0.5, -0.5, -0.5), Vector3::new(0.5, 0.5, 0.5));
        assert_eq!(cloud.crop(&small).len(), 1);
        assert!(PointCloud::default().aabb().is_none());
    }
}
