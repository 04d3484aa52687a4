//! Intrinsic Shape Signature keypoints.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::Vector3;

use crate::geometry::PointCloud;
use crate::index::{Neighbor, SpatialIndex};
use crate::normals::{neighborhood_covariance, SortedEigen};

/// Detected keypoint with its scatter eigenvalues, `λ1 ≥ λ2 ≥ λ3 ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub index: usize,
    pub eigenvalues: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssParams {
    pub salient_radius_m: f64,
    pub nonmax_radius_m: f64,
    pub gamma21: f64,
    pub gamma32: f64,
    pub min_neighbors: usize,
    /// Lower bound on λ3/λ1.
    pub min_salience: f64,
    /// Strongest keypoints kept by `λ3`.
    pub max_keypoints: usize,
}

/// Mean nearest-neighbor spacing, estimated on at most 10 000 points.
pub fn estimate_resolution(cloud: &PointCloud, index: &SpatialIndex) -> f64 {
    let n = cloud.len();
    if n < 2 {
        return 0.0;
    }
    let stride = n.div_ceil(10_000);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut buf = Vec::new();
    for i in (0..n).step_by(stride) {
        index.knn_into(&cloud.points[i].position, 2, &mut buf);
        if let Some(nb) = buf.get(1) {
            sum += libm::sqrt(nb.dist_sq);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn lex(a: &Vector3<f64>, b: &Vector3<f64>) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Points whose local scatter is clearly three-dimensional and locally
/// maximal in `λ3`.
///
/// Ties in `λ3` are broken by position, so the result as a set of locations
/// does not depend on input order. Output is sorted by decreasing `λ3`.
pub fn detect_iss_keypoints(
    cloud: &PointCloud,
    index: &SpatialIndex,
    params: &IssParams,
) -> Vec<Keypoint> {
    let n = cloud.len();
    let mut lambda3 = alloc::vec![f64::NAN; n];
    let mut eigen = alloc::vec![[0.0; 3]; n];
    let mut buf: Vec<Neighbor> = Vec::new();
    let mut candidates = Vec::new();

    for i in 0..n {
        let p = cloud.points[i].position;
        index.radius_unsorted(&p, params.salient_radius_m, &mut buf);
        if buf.len() < params.min_neighbors.max(3) {
            continue;
        }
        let Some((_, cov)) = neighborhood_covariance(cloud, &buf) else {
            continue;
        };
        let e = SortedEigen::new(&cov);
        let (l1, l2, l3) = (e.values[2], e.values[1], e.values[0].max(0.0));
        // Tiny λ3 means a flat or linear patch whose λ3 is noise.
        if !(l1 > 0.0 && l2 > 0.0 && l3 > params.min_salience.max(1e-9) * l1) {
            continue;
        }
        if l2 / l1 < params.gamma21 && l3 / l2 < params.gamma32 {
            lambda3[i] = l3;
            eigen[i] = [l1, l2, l3];
            candidates.push(i);
        }
    }

    // Values within rounding of each other count as ties, since summation
    // order (and thus the last bits) depends on the input order.
    let beats = |a: usize, b: usize| -> bool {
        let (la, lb) = (lambda3[a], lambda3[b]);
        if (la - lb).abs() <= 1e-9 * la.max(lb) {
            lex(&cloud.points[a].position, &cloud.points[b].position) == Ordering::Less
        } else {
            la > lb
        }
    };

    let mut keypoints: Vec<Keypoint> = Vec::new();
    for &i in &candidates {
        index.radius_unsorted(&cloud.points[i].position, params.nonmax_radius_m, &mut buf);
        let is_max = buf
            .iter()
            .all(|nb| nb.index == i || lambda3[nb.index].is_nan() || beats(i, nb.index));
        if is_max {
            keypoints.push(Keypoint {
                index: i,
                eigenvalues: eigen[i],
            });
        }
    }
    keypoints.sort_by(|a, b| {
        b.eigenvalues[2]
            .total_cmp(&a.eigenvalues[2])
            .then_with(|| lex(&cloud.points[a.index].position, &cloud.points[b.index].position))
    });
    keypoints.truncate(params.max_keypoints);
    keypoints
}
