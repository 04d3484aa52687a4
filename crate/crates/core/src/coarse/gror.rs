//! Descriptor matching and pairwise-rigidity filtering of correspondences.

use alloc::vec::Vec;

use nalgebra::Vector3;

use super::fpfh::FpfhDescriptor;

/// Putative match between a source and a target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Index into the source descriptor set.
    pub source: usize,
    /// Index into the target descriptor set.
    pub target: usize,
    /// L2 distance between the descriptors.
    pub distance: f64,
}

/// Nearest target descriptor (L2) for every valid source descriptor.
///
/// No ratio test; ties go to the lower target index. Invalid descriptors on
/// either side are ignored.
pub fn match_features(src: &[FpfhDescriptor], tgt: &[FpfhDescriptor]) -> Vec<Correspondence> {
    src.iter()
        .enumerate()
        .filter(|(_, d)| d.valid)
        .filter_map(|(i, d)| {
            let mut best: Option<(usize, f64)> = None;
            for (j, t) in tgt.iter().enumerate() {
                if !t.valid {
                    continue;
                }
                let dist = d.distance_sq(t);
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((j, dist));
                }
            }
            best.map(|(j, dist)| Correspondence {
                source: i,
                target: j,
                distance: libm::sqrt(dist),
            })
        })
        .collect()
}

/// Pairwise rigidity consistency between correspondences.
///
/// Edges are evaluated on demand from the stored endpoints instead of
/// materializing an `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityGraph {
    pub source_points: Vec<Vector3<f64>>,
    pub target_points: Vec<Vector3<f64>>,
    pub tau_m: f64,
    pub weighted: bool,
    /// Row sums of the adjacency matrix.
    pub reliability: Vec<f64>,
}

impl CompatibilityGraph {
    pub fn new(
        source_points: Vec<Vector3<f64>>,
        target_points: Vec<Vector3<f64>>,
        tau_m: f64,
        weighted: bool,
    ) -> Self {
        let n = source_points.len();
        let mut graph = Self {
            source_points,
            target_points,
            tau_m,
            weighted,
            reliability: alloc::vec![0.0; n],
        };
        for i in 0..n {
            for j in i + 1..n {
                let w = graph.adjacency(i, j);
                graph.reliability[i] += w;
                graph.reliability[j] += w;
            }
        }
        graph
    }

    pub fn len(&self) -> usize {
        self.source_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_points.is_empty()
    }

    /// Edge weight: 1 when the two correspondences preserve their mutual
    /// distance within `tau_m` (binary mode) or `max(0, 1 − diff/τ)`
    /// (weighted mode). The diagonal is zero.
    pub fn adjacency(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let ds = (self.source_points[i] - self.source_points[j]).norm();
        let dt = (self.target_points[i] - self.target_points[j]).norm();
        let diff = (ds - dt).abs();
        if self.weighted {
            (1.0 - diff / self.tau_m).max(0.0)
        } else if diff <= self.tau_m {
            1.0
        } else {
            0.0
        }
    }
}

/// Keeps the `k` most reliable correspondences.
///
/// `source_points[c.source]` and `target_points[c.target]` give each
/// correspondence's endpoints. Output order: reliability descending, then
/// descriptor distance ascending, then input position.
pub fn gror_filter(
    correspondences: &[Correspondence],
    source_points: &[Vector3<f64>],
    target_points: &[Vector3<f64>],
    tau_m: f64,
    k: usize,
    weighted: bool,
) -> (Vec<Correspondence>, CompatibilityGraph) {
    let graph = CompatibilityGraph::new(
        correspondences.iter().map(|c| source_points[c.source]).collect(),
        correspondences.iter().map(|c| target_points[c.target]).collect(),
        tau_m,
        weighted,
    );
    let mut order: Vec<usize> = (0..correspondences.len()).collect();
    order.sort_by(|&a, &b| {
        graph.reliability[b]
            .total_cmp(&graph.reliability[a])
            .then(correspondences[a].distance.total_cmp(&correspondences[b].distance))
            .then(a.cmp(&b))
    });
    let kept = order.iter().take(k).map(|&i| correspondences[i]).collect();
    (kept, graph)
}
