//! Per-fragment transforms expressed relative to the first fragment, gap
//! filling, and colors for plotting drift along the trajectory.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftComponent {
    Rx,
    Ry,
    Rz,
    Tx,
    Ty,
    Tz,
    Norm,
}

impl DriftComponent {
    pub const ALL: [DriftComponent; 7] = [
        DriftComponent::Rx,
        DriftComponent::Ry,
        DriftComponent::Rz,
        DriftComponent::Tx,
        DriftComponent::Ty,
        DriftComponent::Tz,
        DriftComponent::Norm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DriftComponent::Rx => "rx",
            DriftComponent::Ry => "ry",
            DriftComponent::Rz => "rz",
            DriftComponent::Tx => "tx",
            DriftComponent::Ty => "ty",
            DriftComponent::Tz => "tz",
            DriftComponent::Norm => "norm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s.trim())
    }
}

/// One fragment's transform relative to the first valid fragment.
/// Angles in degrees, translations in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEntry {
    pub id: usize,
    pub valid: bool,
    pub interpolated: bool,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub translation_norm: f64,
}

impl DriftEntry {
    fn invalid(id: usize) -> Self {
        Self {
            id,
            valid: false,
            interpolated: false,
            rx: 0.0,
            ry: 0.0,
            rz: 0.0,
            tx: 0.0,
            ty: 0.0,
            tz: 0.0,
            translation_norm: 0.0,
        }
    }

    fn from_components(id: usize, c: [f64; 6]) -> Self {
        Self {
            id,
            valid: true,
            interpolated: false,
            rx: c[0],
            ry: c[1],
            rz: c[2],
            tx: c[3],
            ty: c[4],
            tz: c[5],
            translation_norm: Vector3::new(c[3], c[4], c[5]).norm(),
        }
    }

    pub fn components(&self) -> [f64; 6] {
        [self.rx, self.ry, self.rz, self.tx, self.ty, self.tz]
    }

    pub fn get(&self, c: DriftComponent) -> f64 {
        match c {
            DriftComponent::Rx => self.rx,
            DriftComponent::Ry => self.ry,
            DriftComponent::Rz => self.rz,
            DriftComponent::Tx => self.tx,
            DriftComponent::Ty => self.ty,
            DriftComponent::Tz => self.tz,
            DriftComponent::Norm => self.translation_norm,
        }
    }

    /// Holds a value, either measured or filled in.
    pub fn has_value(&self) -> bool {
        self.valid || self.interpolated
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriftSeries {
    pub entries: Vec<DriftEntry>,
}

/// Relative transforms `T_first⁻¹ ∘ T_k`, decomposed into Euler angles.
///
/// `None` marks a fragment whose registration failed.
pub fn build_drift_series(transforms: &[(usize, Option<RigidTransform>)]) -> Result<DriftSeries> {
    let Some(first) = transforms.iter().find_map(|(_, t)| *t) else {
        return Err(Error::InsufficientData {
            what: "valid fragment transforms",
            needed: 1,
            got: 0,
        });
    };
    let inv = first.inverse();
    let entries = transforms
        .iter()
        .map(|&(id, t)| match t {
            None => DriftEntry::invalid(id),
            Some(t) => {
                let rel = inv.compose(&t);
                let e = rel.to_euler();
                let v = rel.translation;
                DriftEntry::from_components(id, [e.rx, e.ry, e.rz, v.x, v.y, v.z])
            }
        })
        .collect();
    Ok(DriftSeries { entries })
}

/// Fills failed fragments by linear interpolation (by position in the
/// series) between the nearest valid neighbors; leading and trailing
/// failures copy the nearest valid entry. Filled entries keep
/// `valid = false` and get `interpolated = true`.
pub fn interpolate_failed(series: &DriftSeries) -> DriftSeries {
    let anchors: Vec<usize> = (0..series.entries.len()).filter(|&i| series.entries[i].valid).collect();
    let mut out = series.clone();
    if anchors.is_empty() {
        return out;
    }
    for (i, entry) in out.entries.iter_mut().enumerate() {
        if entry.has_value() {
            continue;
        }
        let after = anchors.partition_point(|&a| a < i);
        let values = match (after.checked_sub(1).map(|b| anchors[b]), anchors.get(after)) {
            (Some(lo), Some(&hi)) => {
                let w = (i - lo) as f64 / (hi - lo) as f64;
                let (a, b) = (series.entries[lo].components(), series.entries[hi].components());
                core::array::from_fn(|k| a[k] + w * (b[k] - a[k]))
            }
            (Some(lo), None) => series.entries[lo].components(),
            (None, Some(&hi)) => series.entries[hi].components(),
            (None, None) => unreachable!("anchors is non-empty"),
        };
        *entry = DriftEntry {
            valid: false,
            interpolated: true,
            ..DriftEntry::from_components(entry.id, values)
        };
    }
    out
}

pub const BLACK: [u8; 3] = [0, 0, 0];

/// Blue at `t = 0` to red at `t = 1`.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    [libm::round(255.0 * t) as u8, 0, libm::round(255.0 * (1.0 - t)) as u8]
}

/// Trajectory samples colored by `component` of the fragment whose time
/// span contains them.
///
/// `spans[i]` is the (start, end) time of `series.entries[i]`. Values map
/// linearly from the series minimum (blue) to maximum (red); a constant
/// series is drawn mid-scale. Samples in fragments without a value, or in
/// no span at all, are black.
pub fn color_trajectory(
    series: &DriftSeries,
    trajectory: &Trajectory,
    spans: &[(f64, f64)],
    component: DriftComponent,
) -> Result<Vec<(Vector3<f64>, [u8; 3])>> {
    if spans.len() != series.entries.len() {
        return Err(crate::error::invalid(
            "spans",
            alloc::format!("{} spans for {} fragments", spans.len(), series.entries.len()),
        ));
    }
    let values: Vec<f64> = series
        .entries
        .iter()
        .filter(|e| e.has_value())
        .map(|e| e.get(component))
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };

    Ok(trajectory
        .samples()
        .iter()
        .map(|s| {
            let color = spans
                .iter()
                .position(|&(a, b)| s.gps_time >= a && s.gps_time <= b)
                .map(|i| &series.entries[i])
                .filter(|e| e.has_value())
                .map_or(BLACK, |e| colormap(scale(e.get(component))));
            (s.position, color)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectorySample;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        RigidTransform::from_euler_deg(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        )
    }

    #[test]
    fn shared_transform_gives_zero_series() {
        let t = RigidTransform::from_euler_deg(3.0, -2.0, 10.0, Vector3::new(5.0, 1.0, 0.2));
        let s = build_drift_series(&(0..5).map(|i| (i, Some(t))).collect::<Vec<_>>()).unwrap();
        for e in &s.entries {
            assert!(e.components().iter().all(|c| c.abs() < 1e-9) && e.translation_norm < 1e-9);
        }
    }

    #[test]
    fn translation_ramp() {
        let input: Vec<_> = (0..6)
            .map(|k| (k, Some(RigidTransform::from_translation(Vector3::new(0.01 * k as f64, 0.0, 0.0)))))
            .collect();
        let s = build_drift_series(&input).unwrap();
        for (k, e) in s.entries.iter().enumerate() {
            assert!((e.tx - 0.01 * k as f64).abs() < 1e-15);
            assert!((e.translation_norm - e.tx.abs()).abs() < 1e-12);
        }
        assert!(build_drift_series(&[(0, None), (1, None)]).is_err());
    }

    #[test]
    fn decomposition_matches_basis_vector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input: Vec<_> = (0..12)
            .map(|k| (k, if k % 5 == 3 { None } else { Some(random_transform(&mut rng)) }))
            .collect();
        let s = build_drift_series(&input).unwrap();
        let first = input[0].1.unwrap();
        for ((_, t), e) in input.iter().zip(&s.entries) {
            let Some(t) = t else {
                assert!(!e.valid);
                continue;
            };
            // Map the origin and the unit points through T_k, then back
            // through T_first; differences give the rotation's columns.
            let back = |p: Vector3<f64>| first.rotation.transpose() * (t.apply(&p) - first.translation);
            let o = back(Vector3::zeros());
            let cols = [back(Vector3::x()) - o, back(Vector3::y()) - o, back(Vector3::z()) - o];
            let r = |i: usize, j: usize| cols[j][i];
            let ry = libm::asin(-r(2, 0)).to_degrees();
            let rx = libm::atan2(r(2, 1), r(2, 2)).to_degrees();
            let rz = libm::atan2(r(1, 0), r(0, 0)).to_degrees();
            let expect = [rx, ry, rz, o.x, o.y, o.z];
            for (a, b) in e.components().iter().zip(expect) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    fn entry(id: usize, tx: f64) -> DriftEntry {
        DriftEntry::from_components(id, [0.0, 0.0, 0.0, tx, 0.0, 0.0])
    }

    #[test]
    fn midpoint_and_thirds() {
        let s = DriftSeries {
            entries: alloc::vec![entry(0, 0.0), DriftEntry::invalid(1), entry(2, 0.002)],
        };
        let f = interpolate_failed(&s);
        assert!((f.entries[1].tx - 0.001).abs() < 1e-15);
        assert!(f.entries[1].interpolated && !f.entries[1].valid);

        let s = DriftSeries {
            entries: alloc::vec![entry(0, 0.0), DriftEntry::invalid(1), DriftEntry::invalid(2), entry(3, 0.3)],
        };
        let f = interpolate_failed(&s);
        assert!((f.entries[1].tx - 0.1).abs() < 1e-12 && (f.entries[2].tx - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ends_copy_the_nearest_valid_entry() {
        let s = DriftSeries {
            entries: alloc::vec![DriftEntry::invalid(0), entry(1, 0.5), entry(2, 0.7), DriftEntry::invalid(3)],
        };
        let f = interpolate_failed(&s);
        assert_eq!(f.entries[0].tx, 0.5);
        assert_eq!(f.entries[3].tx, 0.7);
        assert!(f.entries[3].interpolated);
        assert_eq!(interpolate_failed(&f), f);
    }

    fn straight_trajectory(n: usize) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| TrajectorySample {
                    gps_time: i as f64,
                    position: Vector3::new(i as f64, 0.0, 0.0),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn colors_follow_the_component() {
        let traj = straight_trajectory(30);
        let spans: Vec<_> = (0..3).map(|i| (i as f64 * 10.0, i as f64 * 10.0 + 9.999)).collect();

        let constant = DriftSeries {
            entries: (0..3).map(|i| entry(i, 0.01)).collect(),
        };
        let c = color_trajectory(&constant, &traj, &spans, DriftComponent::Tx).unwrap();
        assert!(c.iter().all(|(_, rgb)| *rgb == c[0].1) && c[0].1 != BLACK);

        let ramp = DriftSeries {
            entries: (0..3).map(|i| entry(i, 0.01 * i as f64)).collect(),
        };
        let c = color_trajectory(&ramp, &traj, &spans, DriftComponent::Tx).unwrap();
        assert!(c.windows(2).all(|w| w[1].1[0] >= w[0].1[0] && w[1].1[2] <= w[0].1[2]));
        assert_eq!((c[0].1, c[29].1), ([0, 0, 255], [255, 0, 0]));

        let mut gap = ramp.clone();
        gap.entries[1] = DriftEntry::invalid(1);
        let c = color_trajectory(&gap, &traj, &spans, DriftComponent::Norm).unwrap();
        assert!(c[10..20].iter().all(|(_, rgb)| *rgb == BLACK));
        assert!(color_trajectory(&gap, &traj, &spans[..2], DriftComponent::Tx).is_err());
    }

    #[test]
    fn component_names_round_trip() {
        for c in DriftComponent::ALL {
            assert_eq!(DriftComponent::parse(c.name()), Some(c));
        }
        assert_eq!(DriftComponent::parse("yaw"), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn common_premultiplication_cancels(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = RigidTransform::from_euler_deg(
                rng.random_range(-170.0..170.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(-170.0..170.0),
                Vector3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-10.0..10.0)),
            );
            let input: Vec<_> = (0..8).map(|k| (k, (k != 4).then(|| random_transform(&mut rng)))).collect();
            let moved: Vec<_> = input.iter().map(|&(k, t)| (k, t.map(|t| g.compose(&t)))).collect();
            let (a, b) = (build_drift_series(&input).unwrap(), build_drift_series(&moved).unwrap());
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(x.valid, y.valid);
                for (p, q) in x.components().iter().zip(y.components()) {
                    prop_assert!((p - q).abs() <= 1e-9);
                }
            }
            let once = interpolate_failed(&a);
            prop_assert_eq!(interpolate_failed(&once), once);
        }
    }
}
