//! Joint voxelization of two clouds and planar-cell selection by normal
//! consistency.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Result};
use crate::geometry::{Aabb, Normal, RigidTransform, UnitVector3};
use crate::normals::SortedEigen;

/// One occupied cell of a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCell {
    pub key: [i64; 3],
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    /// Mean of the hemisphere-aligned member normals, once classified.
    pub mean_normal: Option<UnitVector3>,
    /// Fraction of members within the angle threshold of the mean normal.
    pub consistency: f64,
    pub planar: bool,
    /// The aligned normals summed to zero; the cell cannot be planar.
    pub degenerate: bool,
}

impl VoxelCell {
    pub fn len(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cells of a regular grid covering both clouds, sorted by key.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    /// Grid corner in the grid frame.
    pub origin: Vector3<f64>,
    pub edge_m: f64,
    /// Maps world coordinates into the grid frame.
    pub to_grid: RigidTransform,
    pub cells: Vec<VoxelCell>,
}

impl VoxelGrid {
    /// Center of the cell with `key`, in world coordinates.
    pub fn cell_center(&self, key: &[i64; 3]) -> Vector3<f64> {
        let local = self.origin + Vector3::new(key[0] as f64 + 0.5, key[1] as f64 + 0.5, key[2] as f64 + 0.5) * self.edge_m;
        self.to_grid.inverse().apply(&local)
    }
}

/// Grid anchored at the min corner of the AABB enclosing both clouds.
///
/// A coordinate exactly on a cell boundary belongs to the higher cell.
pub fn merged_voxel_grid(source: &[Vector3<f64>], target: &[Vector3<f64>], edge_m: f64) -> Result<VoxelGrid> {
    merged_voxel_grid_in(source, target, edge_m, &RigidTransform::identity())
}

/// Like [`merged_voxel_grid`], with the grid axis-aligned in the frame that
/// `to_grid` maps world coordinates into.
pub fn merged_voxel_grid_in(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    edge_m: f64,
    to_grid: &RigidTransform,
) -> Result<VoxelGrid> {
    if !(edge_m > 0.0 && edge_m.is_finite()) {
        return Err(invalid("voxel_edge_m", "must be positive"));
    }
    let src: Vec<Vector3<f64>> = source.iter().map(|p| to_grid.apply(p)).collect();
    let tgt: Vec<Vector3<f64>> = target.iter().map(|p| to_grid.apply(p)).collect();
    let Some(bounds) = Aabb::from_points(src.iter().chain(tgt.iter())) else {
        return Ok(VoxelGrid {
            origin: Vector3::zeros(),
            edge_m,
            to_grid: *to_grid,
            cells: Vec::new(),
        });
    };
    let origin = bounds.min_corner;
    let key_of = |p: &Vector3<f64>| -> [i64; 3] {
        let c = (p - origin) / edge_m;
        [libm::floor(c.x) as i64, libm::floor(c.y) as i64, libm::floor(c.z) as i64]
    };

    // (key, 0 = source | 1 = target, index), sorted so cells are contiguous.
    let mut entries: Vec<([i64; 3], u8, usize)> = Vec::with_capacity(src.len() + tgt.len());
    entries.extend(src.iter().enumerate().map(|(i, p)| (key_of(p), 0, i)));
    entries.extend(tgt.iter().enumerate().map(|(i, p)| (key_of(p), 1, i)));
    entries.sort_unstable();

    let mut cells: Vec<VoxelCell> = Vec::new();
    for (key, side, i) in entries {
        if cells.last().is_none_or(|c| c.key != key) {
            cells.push(VoxelCell {
                key,
                source: Vec::new(),
                target: Vec::new(),
                mean_normal: None,
                consistency: 0.0,
                planar: false,
                degenerate: false,
            });
        }
        let cell = cells.last_mut().expect("pushed above");
        if side == 0 {
            cell.source.push(i);
        } else {
            cell.target.push(i);
        }
    }
    Ok(VoxelGrid {
        origin,
        edge_m,
        to_grid: *to_grid,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarParams {
    pub min_points: usize,
    pub angle_deg: f64,
    pub ratio: f64,
}

impl Default for PlanarParams {
    fn default() -> Self {
        Self {
            min_points: 100,
            angle_deg: 10.0,
            ratio: 0.70,
        }
    }
}

/// Indices of the points in planar cells, plus cell counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanarSelection {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub cells: usize,
    /// Cells with enough members to be classified.
    pub evaluated: usize,
    pub planar: usize,
    pub degenerate: usize,
}

/// Mean direction and consistency ratio of a set of unoriented normals.
///
/// Normals are first flipped into the hemisphere of the principal direction
/// of `Σ n nᵀ`, otherwise opposite normals of one plane would cancel.
/// `members` counts points without a normal too; they never count as
/// consistent. `None` when the aligned normals sum to zero.
pub fn normal_consistency(normals: &[Vector3<f64>], members: usize, angle_deg: f64) -> Option<(UnitVector3, f64)> {
    let mut scatter = Matrix3::zeros();
    for n in normals {
        scatter += n * n.transpose();
    }
    let mut axis = SortedEigen::new(&scatter).largest_vector();
    // Fix the eigenvector's sign so ties resolve the same way every time.
    let imax = axis.iamax();
    if axis[imax] < 0.0 {
        axis = -axis;
    }
    let sum: Vector3<f64> = normals.iter().map(|n| if n.dot(&axis) < 0.0 { -n } else { *n }).sum();
    let mean = UnitVector3::new(sum)?;
    let cos_limit = libm::cos(angle_deg.to_radians());
    let consistent = normals
        .iter()
        .filter(|n| libm::fabs(mean.dot(n)) >= cos_limit)
        .count();
    let ratio = if members == 0 { 0.0 } else { consistent as f64 / members as f64 };
    Some((mean, ratio))
}

/// Classifies every cell with at least `min_points` members (both clouds
/// together) and collects the members of planar cells.
///
/// Normals are looked up by index in `source_normals` / `target_normals` and
/// must be expressed in the same frame as the grid's input points.
pub fn classify_planar(
    grid: &mut VoxelGrid,
    source_normals: &[Normal],
    target_normals: &[Normal],
    params: &PlanarParams,
) -> PlanarSelection {
    let mut out = PlanarSelection {
        cells: grid.cells.len(),
        ..PlanarSelection::default()
    };
    let mut normals = Vec::new();
    for cell in &mut grid.cells {
        cell.mean_normal = None;
        cell.consistency = 0.0;
        cell.planar = false;
        cell.degenerate = false;
        if cell.len() < params.min_points {
            continue;
        }
        out.evaluated += 1;
        normals.clear();
        normals.extend(cell.source.iter().filter_map(|&i| source_normals[i]).map(UnitVector3::into_inner));
        normals.extend(cell.target.iter().filter_map(|&i| target_normals[i]).map(UnitVector3::into_inner));
        match normal_consistency(&normals, cell.len(), params.angle_deg) {
            None => {
                cell.degenerate = true;
                out.degenerate += 1;
            }
            Some((mean, ratio)) => {
                cell.mean_normal = Some(mean);
                cell.consistency = ratio;
                cell.planar = ratio >= params.ratio;
            }
        }
        if cell.planar {
            out.planar += 1;
            out.source.extend_from_slice(&cell.source);
            out.target.extend_from_slice(&cell.target);
        }
    }
    out.source.sort_unstable();
    out.target.sort_unstable();
    out
}
