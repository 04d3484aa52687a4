//! Static k-d tree over 3D positions.
//!
//! Results are ordered by `(squared distance, original index)`, which makes
//! them identical to a sorted exhaustive scan even in the presence of ties.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::Vector3;

use crate::geometry::PointCloud;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Point range in the reordered storage.
    start: u32,
    end: u32,
    /// Children node ids, `u32::MAX` for leaves.
    left: u32,
    right: u32,
    axis: u8,
    split: f64,
}

/// A neighbor returned by a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    fn cmp_key(&self, other: &Neighbor) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

/// Immutable k-NN and radius index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_positions(cloud.points.iter().map(|p| p.position))
    }

    pub fn from_positions(positions: impl IntoIterator<Item = Vector3<f64>>) -> Self {
        let raw: Vec<[f64; 3]> = positions.into_iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut ids: Vec<u32> = (0..raw.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * raw.len() / LEAF_SIZE + 1);
        if !raw.is_empty() {
            build(&raw, &mut ids, 0, raw.len(), &mut nodes);
        }
        let points = ids.iter().map(|&i| raw[i as usize]).collect();
        Self { points, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Up to `k` nearest points, closest first.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        let mut out = Vec::with_capacity(k + 1);
        self.knn_into(query, k, &mut out);
        out
    }

    /// Like [`SpatialIndex::knn`] but reuses `out`.
    pub fn knn_into(&self, query: &Vector3<f64>, k: usize, out: &mut Vec<Neighbor>) {
        out.clear();
        if k == 0 || self.nodes.is_empty() {
            return;
        }
        let q = [query.x, query.y, query.z];
        self.knn_node(0, &q, k, out);
    }

    pub fn nearest(&self, query: &Vector3<f64>) -> Option<Neighbor> {
        self.knn(query, 1).into_iter().next()
    }

    /// Nearest neighbor restricted to `max_dist`.
    pub fn nearest_within(&self, query: &Vector3<f64>, max_dist: f64) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [query.x, query.y, query.z];
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: max_dist * max_dist,
        };
        self.nearest_node(0, &q, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    /// All points with distance ≤ `radius`, closest first.
    pub fn radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.radius_into(query, radius, &mut out);
        out
    }

    pub fn radius_into(&self, query: &Vector3<f64>, radius: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        if self.nodes.is_empty() || radius < 0.0 {
            return;
        }
        let q = [query.x, query.y, query.z];
        self.radius_node(0, &q, radius * radius, out);
        out.sort_unstable_by(Neighbor::cmp_key);
    }

    /// Like [`SpatialIndex::radius_into`] but unsorted; cheaper for counting.
    pub fn radius_unsorted(&self, query: &Vector3<f64>, radius: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        if self.nodes.is_empty() || radius < 0.0 {
            return;
        }
        let q = [query.x, query.y, query.z];
        self.radius_node(0, &q, radius * radius, out);
    }

    fn knn_node(&self, node_id: usize, q: &[f64; 3], k: usize, out: &mut Vec<Neighbor>) {
        let node = &self.nodes[node_id];
        if node.left == u32::MAX {
            for slot in node.start as usize..node.end as usize {
                let cand = Neighbor {
                    index: self.ids[slot] as usize,
                    dist_sq: dist_sq(&self.points[slot], q),
                };
                if out.len() == k {
                    if cand.cmp_key(&out[k - 1]) != Ordering::Less {
                        continue;
                    }
                    out.pop();
                }
                let pos = out
                    .iter()
                    .position(|n| cand.cmp_key(n) == Ordering::Less)
                    .unwrap_or(out.len());
                out.insert(pos, cand);
            }
            return;
        }
        let diff = q[node.axis as usize] - node.split;
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.knn_node(near as usize, q, k, out);
        if out.len() < k || diff * diff <= out[out.len() - 1].dist_sq {
            self.knn_node(far as usize, q, k, out);
        }
    }

    fn nearest_node(&self, node_id: usize, q: &[f64; 3], best: &mut Neighbor) {
        let node = &self.nodes[node_id];
        if node.left == u32::MAX {
            for slot in node.start as usize..node.end as usize {
                let cand = Neighbor {
                    index: self.ids[slot] as usize,
                    dist_sq: dist_sq(&self.points[slot], q),
                };
                if cand.dist_sq < best.dist_sq
                    || (cand.dist_sq == best.dist_sq && cand.index < best.index)
                {
                    *best = cand;
                }
            }
            return;
        }
        let diff = q[node.axis as usize] - node.split;
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.nearest_node(near as usize, q, best);
        if diff * diff <= best.dist_sq {
            self.nearest_node(far as usize, q, best);
        }
    }

    fn radius_node(&self, node_id: usize, q: &[f64; 3], r_sq: f64, out: &mut Vec<Neighbor>) {
        let node = &self.nodes[node_id];
        if node.left == u32::MAX {
            for slot in node.start as usize..node.end as usize {
                let d = dist_sq(&self.points[slot], q);
                if d <= r_sq {
                    out.push(Neighbor {
                        index: self.ids[slot] as usize,
                        dist_sq: d,
                    });
                }
            }
            return;
        }
        let diff = q[node.axis as usize] - node.split;
        if diff < 0.0 {
            self.radius_node(node.left as usize, q, r_sq, out);
            if diff * diff <= r_sq {
                self.radius_node(node.right as usize, q, r_sq, out);
            }
        } else {
            self.radius_node(node.right as usize, q, r_sq, out);
            if diff * diff <= r_sq {
                self.radius_node(node.left as usize, q, r_sq, out);
            }
        }
    }
}

#[inline]
fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn build(raw: &[[f64; 3]], ids: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    nodes.push(Node {
        start: start as u32,
        end: end as u32,
        left: u32::MAX,
        right: u32::MAX,
        axis: 0,
        split: 0.0,
    });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let slice = &mut ids[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        let p = &raw[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // All points coincide; keep as one leaf.
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        raw[a as usize][axis].total_cmp(&raw[b as usize][axis])
    });
    let split = raw[slice[mid] as usize][axis];
    // Points left of `mid` are ≤ split and right are ≥ split; queries descend
    // into both sides when the split plane is within range, so ties are safe.
    let left = build(raw, ids, start, start + mid, nodes);
    let right = build(raw, ids, start + mid, end, nodes);
    let node = &mut nodes[id as usize];
    node.left = left;
    node.right = right;
    node.axis = axis as u8;
    node.split = split;
    id
}
