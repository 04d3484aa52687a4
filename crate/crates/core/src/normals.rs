//! Local covariance analysis and normal estimation.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Result};
use crate::geometry::{Normal, PointCloud, UnitVector3};
use crate::index::{Neighbor, SpatialIndex};

/// Eigen-decomposition of a symmetric 3×3 matrix, ascending eigenvalues.
#[derive(Debug, Clone, Copy)]
pub struct SortedEigen {
    pub values: [f64; 3],
    /// Column `i` belongs to `values[i]`.
    pub vectors: Matrix3<f64>,
}

impl SortedEigen {
    pub fn new(m: &Matrix3<f64>) -> Self {
        let eig = m.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut vectors = Matrix3::zeros();
        let mut values = [0.0; 3];
        for (dst, &src) in order.iter().enumerate() {
            values[dst] = eig.eigenvalues[src];
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn smallest_vector(&self) -> Vector3<f64> {
        self.vectors.column(0).into_owned()
    }

    pub fn largest_vector(&self) -> Vector3<f64> {
        self.vectors.column(2).into_owned()
    }

    /// True when the spread has fewer than two significant directions.
    pub fn is_rank_deficient(&self) -> bool {
        let max = self.values[2];
        !(max > 1e-24) || self.values[1] <= 1e-10 * max
    }
}

/// Mean and (biased) covariance of a point set.
pub fn mean_and_covariance<'a>(
    points: impl IntoIterator<Item = &'a Vector3<f64>>,
) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    let pts: Vec<&Vector3<f64>> = points.into_iter().collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + *p) / n;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = *p - mean;
        cov += d * d.transpose();
    }
    Some((mean, cov / n))
}

/// Covariance of the points listed in `neighbors`.
pub(crate) fn neighborhood_covariance(
    cloud: &PointCloud,
    neighbors: &[Neighbor],
) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    if neighbors.is_empty() {
        return None;
    }
    let n = neighbors.len() as f64;
    let mean = neighbors
        .iter()
        .fold(Vector3::zeros(), |acc, nb| acc + cloud.points[nb.index].position)
        / n;
    let mut cov = Matrix3::zeros();
    for nb in neighbors {
        let d = cloud.points[nb.index].position - mean;
        cov += d * d.transpose();
    }
    Some((mean, cov / n))
}

fn normal_from_neighbors(cloud: &PointCloud, neighbors: &[Neighbor]) -> Normal {
    if neighbors.len() < 3 {
        return None;
    }
    let (_, cov) = neighborhood_covariance(cloud, neighbors)?;
    let eig = SortedEigen::new(&cov);
    if eig.is_rank_deficient() {
        return None;
    }
    UnitVector3::new(eig.smallest_vector())
}

/// Unoriented normals for every point, from the covariance of each point's
/// `k` nearest neighbors (the point itself included as an extra member).
///
/// Clouds smaller than `k + 1` use all points as the neighborhood. Points
/// whose neighborhood covariance has rank < 2 get `None`.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let index = SpatialIndex::new(cloud);
    let all: Vec<usize> = (0..cloud.len()).collect();
    let normals = estimate_normals_at(cloud, &index, &all, k)?;
    cloud.clone().with_normals(normals)
}

/// Normals for the points listed in `queries`, using a prebuilt index over `cloud`.
pub fn estimate_normals_at(
    cloud: &PointCloud,
    index: &SpatialIndex,
    queries: &[usize],
    k: usize,
) -> Result<Vec<Normal>> {
    if k < 3 {
        return Err(invalid("k", "normal estimation needs k >= 3"));
    }
    let mut buf = Vec::with_capacity(k + 1);
    Ok(queries
        .iter()
        .map(|&i| {
            index.knn_into(&cloud.points[i].position, k + 1, &mut buf);
            normal_from_neighbors(cloud, &buf)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_cloud(n: usize, seed: u64, map: impl Fn(f64, f64) -> Vector3<f64>) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| Point3::at(map(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0))))
            .collect();
        PointCloud::new("plane", pts)
    }

    fn max_angle_deg(cloud: &PointCloud, axis: Vector3<f64>) -> f64 {
        cloud
            .normals
            .as_ref()
            .unwrap()
            .iter()
            .map(|n| {
                let c = n.unwrap().dot(&axis).abs().min(1.0);
                libm::acos(c).to_degrees()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn plane_z0_normals_are_vertical() {
        let cloud = plane_cloud(500, 1, |u, v| Vector3::new(u, v, 0.0));
        let out = estimate_normals(&cloud, 10).unwrap();
        assert!(max_angle_deg(&out, Vector3::z()) < 1.0);
    }

    #[test]
    fn plane_x5_normals_point_along_x() {
        let cloud = plane_cloud(500, 2, |u, v| Vector3::new(5.0, u, v));
        let out = estimate_normals(&cloud, 10).unwrap();
        assert!(max_angle_deg(&out, Vector3::x()) < 1.0);
    }

    #[test]
    fn planar_normals_hold_for_several_k() {
        let cloud = plane_cloud(600, 3, |u, v| {
            // Tilted plane with analytic normal (1, 2, 2) / 3.
            Vector3::new(u, v, -(u + 2.0 * v) / 2.0)
        });
        let axis = Vector3::new(1.0, 2.0, 2.0) / 3.0;
        for k in [8, 16, 32] {
            let out = estimate_normals(&cloud, k).unwrap();
            assert!(max_angle_deg(&out, axis) < 1.0, "k = {k}");
        }
    }

    #[test]
    fn collinear_points_are_flagged() {
        let cloud = PointCloud::from_positions(
            "line",
            &[
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 1.0, 1.0),
                Vector3::new(2.0, 2.0, 2.0),
            ],
        );
        let out = estimate_normals(&cloud, 3).unwrap();
        assert!(out.normals.unwrap().iter().all(Option::is_none));
    }

    #[test]
    fn k_below_three_is_rejected() {
        let cloud = plane_cloud(10, 4, |u, v| Vector3::new(u, v, 0.0));
        assert!(estimate_normals(&cloud, 2).is_err());
    }
}
