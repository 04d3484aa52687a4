//! Plane-to-plane generalized ICP.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::config::GicpParams;
use crate::error::{Error, Result};
use crate::geometry::{skew, RigidTransform};
use crate::index::SpatialIndex;
use crate::normals::{mean_and_covariance, SortedEigen};

const MAX_HALVINGS: usize = 8;

/// Per-iteration record of an accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GicpStep {
    pub correspondences: usize,
    /// Objective on this iteration's correspondences before and after the step.
    pub cost_before: f64,
    pub cost_after: f64,
    /// Number of times the step was halved before it was accepted.
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GicpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub steps: Vec<GicpStep>,
}

/// Covariances `V diag(ε, 1, 1) Vᵀ` of every point's `k`-neighborhood, with
/// `V` the eigenvectors of the neighborhood scatter (smallest first).
pub fn plane_covariances(points: &[Vector3<f64>], index: &SpatialIndex, k: usize, epsilon: f64) -> Vec<Matrix3<f64>> {
    let mut buf = Vec::with_capacity(k);
    let mut members = Vec::with_capacity(k);
    points
        .iter()
        .map(|p| {
            index.knn_into(p, k, &mut buf);
            members.clear();
            members.extend(buf.iter().map(|nb| points[nb.index]));
            let Some((_, cov)) = mean_and_covariance(members.iter()) else {
                return Matrix3::identity();
            };
            let e = SortedEigen::new(&cov);
            let d = Matrix3::from_diagonal(&Vector3::new(epsilon, 1.0, 1.0));
            e.vectors * d * e.vectors.transpose()
        })
        .collect()
}

struct Prepared<'a> {
    source: &'a [Vector3<f64>],
    target: &'a [Vector3<f64>],
    src_cov: Vec<Matrix3<f64>>,
    tgt_cov: Vec<Matrix3<f64>>,
    tgt_index: SpatialIndex,
}

impl<'a> Prepared<'a> {
    fn new(source: &'a [Vector3<f64>], target: &'a [Vector3<f64>], params: &GicpParams) -> Result<Self> {
        let k = params.covariance_k;
        if source.len() < k || target.len() < k {
            return Err(Error::FineFailure(format!(
                "{} source / {} target points, need at least {k} each",
                source.len(),
                target.len()
            )));
        }
        let src_index = SpatialIndex::from_positions(source.iter().copied());
        let tgt_index = SpatialIndex::from_positions(target.iter().copied());
        Ok(Self {
            source,
            target,
            src_cov: plane_covariances(source, &src_index, k, params.plane_epsilon),
            tgt_cov: plane_covariances(target, &tgt_index, k, params.plane_epsilon),
            tgt_index,
        })
    }

    /// Nearest target point within `max_dist` for every source point under `t`.
    fn correspond(&self, t: &RigidTransform, max_dist: f64) -> Vec<(usize, usize)> {
        self.source
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                self.tgt_index
                    .nearest_within(&t.apply(p), max_dist)
                    .map(|nb| (i, nb.index))
            })
            .collect()
    }

    fn information(&self, t: &RigidTransform, i: usize, j: usize) -> Matrix3<f64> {
        let c = self.tgt_cov[j] + t.rotation * self.src_cov[i] * t.rotation.transpose();
        c.try_inverse().unwrap_or_else(Matrix3::zeros)
    }

    fn cost(&self, t: &RigidTransform, pairs: &[(usize, usize)]) -> f64 {
        pairs
            .iter()
            .map(|&(i, j)| {
                let d = self.target[j] - t.apply(&self.source[i]);
                d.dot(&(self.information(t, i, j) * d))
            })
            .sum()
    }
}

/// GICP objective at `t`, with correspondences searched under `t`.
pub fn gicp_objective(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    t: &RigidTransform,
    params: &GicpParams,
) -> Result<f64> {
    let prep = Prepared::new(source, target, params)?;
    let pairs = prep.correspond(t, params.max_corr_dist_m);
    Ok(prep.cost(t, &pairs))
}

/// Refines `initial` so that it maps `source` onto `target`.
///
/// Each iteration linearizes the objective around the current transform with
/// a left-multiplicative update `(ω, v)` and takes a Gauss-Newton step,
/// halving it (up to 8 times) until the cost on the current correspondences
/// does not increase. Stops when both update norms fall below their
/// thresholds, when no step reduces the cost, or after `max_iterations`;
/// only the last case reports `converged = false`.
pub fn gicp(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    initial: &RigidTransform,
    params: &GicpParams,
) -> Result<GicpResult> {
    let prep = Prepared::new(source, target, params)?;
    let mut t = *initial;
    let mut steps = Vec::new();
    let mut converged = false;
    let mut final_cost = 0.0;

    for _ in 0..params.max_iterations {
        let pairs = prep.correspond(&t, params.max_corr_dist_m);
        if pairs.len() < 6 {
            return Err(Error::FineFailure(format!(
                "{} correspondences within {} m, need 6",
                pairs.len(),
                params.max_corr_dist_m
            )));
        }
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        let mut cost = 0.0;
        for &(i, j) in &pairs {
            let p = t.apply(&prep.source[i]);
            let d = prep.target[j] - p;
            let m = prep.information(&t, i, j);
            // d(δ) ≈ d + J δ with J = [[p]×, −I] for δ = (ω, v).
            let mut jac = nalgebra::Matrix3x6::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&p));
            jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
            let jt_m = jac.transpose() * m;
            h += jt_m * jac;
            g += jt_m * d;
            cost += d.dot(&(m * d));
        }
        final_cost = cost;

        let trans = SortedEigen::new(&h.fixed_view::<3, 3>(3, 3).into_owned());
        if !(trans.values[2] > 0.0) || trans.values[0] < params.min_constraint_ratio * trans.values[2] {
            return Err(Error::FineFailure(format!(
                "translation is unconstrained (eigenvalues {:.3e} / {:.3e})",
                trans.values[0], trans.values[2]
            )));
        }
        let Some(delta) = h.cholesky().map(|c| -c.solve(&g)) else {
            return Err(Error::FineFailure("singular normal equations".into()));
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for halvings in 0..=MAX_HALVINGS {
            let step = delta * scale;
            let omega = Vector3::new(step[0], step[1], step[2]);
            let v = Vector3::new(step[3], step[4], step[5]);
            let candidate = t.left_update(&omega, &v);
            let new_cost = prep.cost(&candidate, &pairs);
            if new_cost <= cost {
                accepted = Some((candidate, new_cost, halvings, omega.norm(), v.norm()));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, new_cost, halvings, w_norm, v_norm)) = accepted else {
            converged = true;
            break;
        };
        t = candidate;
        final_cost = new_cost;
        steps.push(GicpStep {
            correspondences: pairs.len(),
            cost_before: cost,
            cost_after: new_cost,
            halvings,
        });
        if w_norm < params.rotation_eps_rad && v_norm < params.translation_eps_m {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("gicp: no convergence after {} iterations", params.max_iterations);
    }
    Ok(GicpResult {
        transform: t,
        iterations: steps.len(),
        final_cost,
        converged,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kabsch::kabsch_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Floor, wall and side wall of a 6 m corner on a jittered 0.1 m grid.
    fn corner(rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                let (a, b) = (i as f64 * 0.1, j as f64 * 0.1);
                let mut j3 = || rng.random_range(-0.03..0.03);
                pts.push(Vector3::new(a + j3(), b + j3(), 0.0));
                pts.push(Vector3::new(a + j3(), 0.0, b + j3()));
                pts.push(Vector3::new(0.0, a + j3(), b + j3()));
            }
        }
        pts
    }

    #[test]
    fn identical_clouds_stay_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = corner(&mut rng);
        let r = gicp(&pts, &pts, &RigidTransform::identity(), &GicpParams::default()).unwrap();
        assert!(r.converged && r.iterations <= 2);
        let t = r.transform;
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(t.translation.norm() < 1e-9);
    }

    #[test]
    fn shift_across_three_planes_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = corner(&mut rng);
        let shift = Vector3::new(0.05, -0.05, 0.05) / 3f64.sqrt();
        // Independent sampling of the same surfaces, moved by -shift.
        let source: Vec<_> = corner(&mut rng).iter().map(|p| p - shift).collect();
        let r = gicp(&source, &target, &RigidTransform::identity(), &GicpParams::default()).unwrap();
        assert!(r.converged);
        assert!((r.transform.translation - shift).norm() < 1e-4, "{:?}", r.transform.translation);
        assert!(r.transform.rotation_angle_deg() < 1e-3);
        for s in &r.steps {
            assert!(s.cost_after <= s.cost_before);
        }
        let before = gicp_objective(&source, &target, &RigidTransform::identity(), &GicpParams::default()).unwrap();
        let after = gicp_objective(&source, &target, &r.transform, &GicpParams::default()).unwrap();
        assert!(after <= before);
    }

    #[test]
    fn rotation_and_translation_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = corner(&mut rng);
        let truth = RigidTransform::from_euler_deg(1.0, -0.5, 2.0, Vector3::new(0.1, -0.2, 0.05));
        let source: Vec<_> = target.iter().map(|p| truth.inverse().apply(p)).collect();
        let r = gicp(&source, &target, &RigidTransform::identity(), &GicpParams::default()).unwrap();
        let err = r.transform.compose(&truth.inverse());
        assert!(err.rotation_angle_deg() < 1e-6 && err.translation.norm() < 1e-6);
    }

    #[test]
    fn single_plane_is_degenerate() {
        let pts: Vec<_> = (0..40)
            .flat_map(|i| (0..40).map(move |j| Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0)))
            .collect();
        assert!(matches!(
            gicp(&pts, &pts, &RigidTransform::identity(), &GicpParams::default()),
            Err(Error::FineFailure(_))
        ));
    }

    #[test]
    fn too_few_correspondences_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = corner(&mut rng);
        let far: Vec<_> = target.iter().map(|p| p + Vector3::new(100.0, 0.0, 0.0)).collect();
        assert!(matches!(
            gicp(&far, &target, &RigidTransform::identity(), &GicpParams::default()),
            Err(Error::FineFailure(_))
        ));
        assert!(gicp(&target[..5], &target, &RigidTransform::identity(), &GicpParams::default()).is_err());
    }

    /// Point-to-point ICP with brute-force nearest neighbors.
    fn brute_force_icp(source: &[Vector3<f64>], target: &[Vector3<f64>], iterations: usize) -> RigidTransform {
        let mut t = RigidTransform::identity();
        for _ in 0..iterations {
            let pairs: Vec<_> = source
                .iter()
                .map(|p| {
                    let q = t.apply(p);
                    let best = target
                        .iter()
                        .min_by(|a, b| (*a - q).norm_squared().total_cmp(&(*b - q).norm_squared()))
                        .unwrap();
                    (*p, *best)
                })
                .collect();
            t = kabsch_fit(&pairs, None).unwrap();
        }
        t
    }

    #[test]
    fn isotropic_limit_matches_point_to_point_icp() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target: Vec<_> = (0..100)
            .map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let truth = RigidTransform::from_euler_deg(2.0, 1.0, -2.0, Vector3::new(0.03, 0.02, -0.01));
        let source: Vec<_> = target.iter().map(|p| truth.inverse().apply(p)).collect();
        let params = GicpParams {
            plane_epsilon: 1.0,
            max_corr_dist_m: 10.0,
            max_iterations: 200,
            translation_eps_m: 1e-12,
            rotation_eps_rad: 1e-12,
            ..GicpParams::default()
        };
        let g = gicp(&source, &target, &RigidTransform::identity(), &params).unwrap();
        let icp = brute_force_icp(&source, &target, 50);
        let diff = g.transform.compose(&icp.inverse());
        assert!(diff.rotation_angle_deg() < 1e-6 && diff.translation.norm() < 1e-8);
    }
}
