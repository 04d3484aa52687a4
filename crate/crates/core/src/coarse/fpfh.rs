//! Fast Point Feature Histograms.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{invalid, Error, Result};
use crate::geometry::{PointCloud, UnitVector3};
use crate::index::{Neighbor, SpatialIndex};

pub const BINS_PER_FEATURE: usize = 11;
pub const FPFH_BINS: usize = 3 * BINS_PER_FEATURE;

/// Fewer neighbors than this give a zero histogram.
pub const MIN_NEIGHBORS: usize = 5;

/// 33-bin descriptor: θ, α and φ sub-histograms, each summing to 100.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpfhDescriptor {
    pub histogram: [f64; FPFH_BINS],
    /// False when the keypoint had too few neighbors (histogram is zero).
    pub valid: bool,
}

impl FpfhDescriptor {
    pub fn distance_sq(&self, other: &FpfhDescriptor) -> f64 {
        self.histogram
            .iter()
            .zip(&other.histogram)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Angular features `(θ, α, φ)` of an oriented point pair in the Darboux
/// frame of whichever point makes the smaller angle with the connecting
/// line. `None` for coincident points.
pub fn pair_features(
    p1: &Vector3<f64>,
    n1: &Vector3<f64>,
    p2: &Vector3<f64>,
    n2: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return None;
    }
    let (mut na, mut nb) = (n1, n2);
    let angle1 = na.dot(&dp) / dist;
    let angle2 = nb.dot(&dp) / dist;
    let phi = if libm::acos(angle1.abs().min(1.0)) > libm::acos(angle2.abs().min(1.0)) {
        core::mem::swap(&mut na, &mut nb);
        dp = -dp;
        -angle2
    } else {
        angle1
    };
    let v = dp.cross(na);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return Some((0.0, 0.0, 0.0));
    }
    let v = v / v_norm;
    let w = na.cross(&v);
    let alpha = v.dot(nb);
    let theta = libm::atan2(w.dot(nb), na.dot(nb));
    Some((theta, alpha, phi))
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = libm::floor(BINS_PER_FEATURE as f64 * (value - lo) / (hi - lo));
    (b.max(0.0) as usize).min(BINS_PER_FEATURE - 1)
}

/// Bin indices of a feature triple: θ ∈ [−π, π], α ∈ [−1, 1], φ ∈ [−1, 1].
pub fn feature_bins(theta: f64, alpha: f64, phi: f64) -> [usize; 3] {
    [
        bin(theta, -PI, PI),
        BINS_PER_FEATURE + bin(alpha, -1.0, 1.0),
        2 * BINS_PER_FEATURE + bin(phi, -1.0, 1.0),
    ]
}

/// Flips each normal so that its largest-magnitude component is positive.
///
/// FPFH angles depend on normal signs; this rule gives both clouds the same
/// orientation for the same surface without any viewpoint information.
pub fn orient_dominant_positive(cloud: &mut PointCloud) {
    if let Some(normals) = cloud.normals.as_mut() {
        for n in normals.iter_mut().flatten() {
            let v = n.as_vector();
            let i = (0..3)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            if v[i] < 0.0 {
                *n = n.flipped();
            }
        }
    }
}

/// Simplified histogram of one point over its radius neighbors; each
/// sub-histogram sums to 100. `None` with fewer than [`MIN_NEIGHBORS`].
fn spfh(
    cloud: &PointCloud,
    normals: &[Option<UnitVector3>],
    center: usize,
    neighbors: &[Neighbor],
) -> Option<[f64; FPFH_BINS]> {
    let n1 = normals[center]?;
    let p1 = cloud.points[center].position;
    let mut triples = Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        if nb.index == center {
            continue;
        }
        let Some(n2) = normals[nb.index] else { continue };
        if let Some(f) = pair_features(&p1, n1.as_vector(), &cloud.points[nb.index].position, n2.as_vector()) {
            triples.push(f);
        }
    }
    if triples.len() < MIN_NEIGHBORS {
        return None;
    }
    let inc = 100.0 / triples.len() as f64;
    let mut h = [0.0; FPFH_BINS];
    for (t, a, p) in triples {
        for b in feature_bins(t, a, p) {
            h[b] += inc;
        }
    }
    Some(h)
}

/// Two-pass FPFH at `keypoints` (indices into `cloud`).
///
/// The descriptor is the keypoint's own simplified histogram plus those of
/// its radius neighbors weighted by inverse distance, with each
/// sub-histogram renormalized to 100.
pub fn compute_fpfh(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[usize],
    radius_m: f64,
) -> Result<Vec<FpfhDescriptor>> {
    if !(radius_m > 0.0) {
        return Err(invalid("fpfh_radius_m", "must be positive"));
    }
    let normals = cloud.normals.as_deref().ok_or(Error::MissingAttribute {
        attribute: "normals",
        hint: "estimate normals before computing FPFH",
    })?;

    let mut neighborhoods: Vec<Vec<Neighbor>> = Vec::with_capacity(keypoints.len());
    let mut needed: BTreeMap<usize, Option<[f64; FPFH_BINS]>> = BTreeMap::new();
    for &k in keypoints {
        let hood = index.radius(&cloud.points[k].position, radius_m);
        needed.insert(k, None);
        for nb in &hood {
            needed.insert(nb.index, None);
        }
        neighborhoods.push(hood);
    }
    let mut buf = Vec::new();
    for (&i, slot) in needed.iter_mut() {
        index.radius_into(&cloud.points[i].position, radius_m, &mut buf);
        *slot = spfh(cloud, normals, i, &buf);
    }

    Ok(keypoints
        .iter()
        .zip(&neighborhoods)
        .map(|(&k, hood)| {
            let invalid = FpfhDescriptor {
                histogram: [0.0; FPFH_BINS],
                valid: false,
            };
            let Some(own) = needed[&k] else { return invalid };
            let mut h = own;
            for nb in hood {
                if nb.index == k || nb.dist_sq == 0.0 {
                    continue;
                }
                if let Some(other) = needed[&nb.index] {
                    let w = 1.0 / libm::sqrt(nb.dist_sq);
                    for (dst, src) in h.iter_mut().zip(other.iter()) {
                        *dst += w * src;
                    }
                }
            }
            for part in h.chunks_mut(BINS_PER_FEATURE) {
                let sum: f64 = part.iter().sum();
                if sum > 0.0 {
                    part.iter_mut().for_each(|v| *v *= 100.0 / sum);
                }
            }
            FpfhDescriptor {
                histogram: h,
                valid: true,
            }
        })
        .collect())
}
