//! Closed-form weighted least-squares rigid fit.

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};
use crate::geometry::RigidTransform;
use crate::normals::SortedEigen;

/// Finds `T` minimizing `Σ wᵢ ‖targetᵢ − T(sourceᵢ)‖²`.
///
/// Weights are normalized by their sum, so scaling all of them by a positive
/// constant gives the same result. Reflections are corrected so that
/// `det(R) = +1`.
pub fn kabsch_fit(
    pairs: &[(Vector3<f64>, Vector3<f64>)],
    weights: Option<&[f64]>,
) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            what: "point pairs",
            needed: 3,
            got: pairs.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != pairs.len() {
            return Err(invalid("weights", "length differs from pair count"));
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("weights", "weights must be finite and nonnegative"));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..pairs.len()).map(weight).sum();
    if !(total > 0.0) {
        return Err(invalid("weights", "weights sum to zero"));
    }

    let mut cs = Vector3::zeros();
    let mut ct = Vector3::zeros();
    for (i, (s, t)) in pairs.iter().enumerate() {
        let w = weight(i) / total;
        cs += s * w;
        ct += t * w;
    }

    let mut cross = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (i, (s, t)) in pairs.iter().enumerate() {
        let w = weight(i) / total;
        let ds = s - cs;
        cross += ds * (t - ct).transpose() * w;
        spread += ds * ds.transpose() * w;
    }

    let eig = SortedEigen::new(&spread);
    if eig.is_rank_deficient() {
        return Err(Error::DegenerateGeometry(
            "source points are collinear or coincident",
        ));
    }

    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateGeometry("SVD did not converge")),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()));
    let rotation = v * correction * u.transpose();
    let translation = ct - rotation * cs;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}
