//! RANSAC over three-point samples with a Kabsch model and refit.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::kabsch::kabsch_fit;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacParams {
    pub inlier_dist_m: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub min_inliers: usize,
    pub seed: u64,
    /// Mixed into every trial seed so fragments draw independent samples.
    pub stream: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_dist_m: 0.5,
            max_iterations: 10_000,
            confidence: 0.999,
            min_inliers: 10,
            seed: 0,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub transform: RigidTransform,
    /// Indices of consensus pairs under the final transform.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

fn inliers_of(pairs: &[(Vector3<f64>, Vector3<f64>)], t: &RigidTransform, dist: f64) -> Vec<usize> {
    let d2 = dist * dist;
    pairs
        .iter()
        .enumerate()
        .filter(|(_, (p, q))| (q - t.apply(p)).norm_squared() <= d2)
        .map(|(i, _)| i)
        .collect()
}

/// Trial count for the given inlier ratio at the requested confidence.
pub fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w = inlier_ratio.clamp(0.0, 1.0);
    let w3 = w * w * w;
    if w3 >= 1.0 {
        return 1;
    }
    if w3 <= 0.0 {
        return cap;
    }
    let n = libm::log(1.0 - confidence) / libm::log(1.0 - w3);
    if n.is_finite() {
        (libm::ceil(n) as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Robust rigid transform mapping the first element of each pair onto the
/// second.
///
/// Trial `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
/// `stream · 2³² + i`, so results do not depend on execution order.
pub fn estimate_coarse_transform(
    pairs: &[(Vector3<f64>, Vector3<f64>)],
    params: &RansacParams,
) -> Result<RansacResult> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::CoarseFailure(format!("{n} correspondences, need at least 3")));
    }
    let mut best: Option<(usize, RigidTransform)> = None;
    let mut budget = params.max_iterations;
    let mut trial = 0;
    while trial < budget {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream((params.stream << 32) + trial as u64);
        trial += 1;
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.random_range(0..n - 2);
        for taken in [a.min(b), a.max(b)] {
            if c >= taken {
                c += 1;
            }
        }
        let sample = [pairs[a], pairs[b], pairs[c]];
        let Ok(model) = kabsch_fit(&sample, None) else {
            continue;
        };
        let count = inliers_of(pairs, &model, params.inlier_dist_m).len();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
            budget = required_iterations(count as f64 / n as f64, params.confidence, params.max_iterations)
                .max(trial.min(params.max_iterations));
        }
    }
    let Some((_, model)) = best else {
        return Err(Error::CoarseFailure("every sample was degenerate".into()));
    };

    let mut transform = model;
    let mut inliers = inliers_of(pairs, &transform, params.inlier_dist_m);
    if inliers.len() >= 3 {
        let consensus: Vec<_> = inliers.iter().map(|&i| pairs[i]).collect();
        if let Ok(refit) = kabsch_fit(&consensus, None) {
            let refit_inliers = inliers_of(pairs, &refit, params.inlier_dist_m);
            if refit_inliers.len() >= inliers.len() {
                transform = refit;
                inliers = refit_inliers;
            }
        }
    }
    if inliers.len() < params.min_inliers {
        return Err(Error::CoarseFailure(format!(
            "consensus of {} correspondences, need {}",
            inliers.len(),
            params.min_inliers
        )));
    }
    Ok(RansacResult {
        transform,
        inliers,
        iterations: trial,
    })
}
