//! Stage-I filtering: voxel resampling, statistical outlier removal and
//! retention of static semantic classes.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::config::PreprocessConfig;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::index::SpatialIndex;

/// Integer voxel coordinates of `p` for a grid anchored at `origin`.
/// Intervals are half-open, so boundary points go to the higher cell.
pub fn voxel_key(p: &Vector3<f64>, origin: &Vector3<f64>, cell: f64) -> [i64; 3] {
    [
        libm::floor((p.x - origin.x) / cell) as i64,
        libm::floor((p.y - origin.y) / cell) as i64,
        libm::floor((p.z - origin.z) / cell) as i64,
    ]
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// The grid is anchored at the cloud's AABB minimum corner. Time is the member
/// mean, label the member mode (smallest label on ties), intensity the mean.
/// Normals are dropped. Output is ordered by voxel key.
pub fn voxel_downsample(cloud: &PointCloud, cell_size: f64) -> Result<PointCloud> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(invalid("cell_size", "must be positive"));
    }
    let Some(bounds) = cloud.aabb() else {
        return Ok(PointCloud::new(cloud.name.clone(), Vec::new()));
    };
    let origin = bounds.min_corner;
    let mut keyed: Vec<([i64; 3], usize)> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (voxel_key(&p.position, &origin, cell_size), i))
        .collect();
    keyed.sort_unstable();

    let mut out = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start + 1;
        while end < keyed.len() && keyed[end].0 == key {
            end += 1;
        }
        out.push(merge_members(cloud, keyed[start..end].iter().map(|(_, i)| *i)));
        start = end;
    }
    Ok(PointCloud::new(cloud.name.clone(), out))
}

fn merge_members(cloud: &PointCloud, members: impl Iterator<Item = usize> + Clone) -> Point3 {
    let n = members.clone().count() as f64;
    let position = members
        .clone()
        .fold(Vector3::zeros(), |acc, i| acc + cloud.points[i].position)
        / n;
    let mean_of = |f: &dyn Fn(&Point3) -> Option<f64>| {
        let (sum, count) = members
            .clone()
            .filter_map(|i| f(&cloud.points[i]))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        (count > 0).then(|| sum / count as f64)
    };
    let mut labels: Vec<u16> = members
        .clone()
        .filter_map(|i| cloud.points[i].class_label)
        .collect();
    labels.sort_unstable();
    let mut mode = None;
    let mut best = 0;
    let mut run_start = 0;
    for i in 0..labels.len() {
        if i + 1 == labels.len() || labels[i + 1] != labels[i] {
            let run = i + 1 - run_start;
            if run > best {
                best = run;
                mode = Some(labels[i]);
            }
            run_start = i + 1;
        }
    }
    Point3 {
        position,
        gps_time: mean_of(&|p| p.gps_time),
        class_label: mode,
        intensity: mean_of(&|p| p.intensity),
    }
}

/// Mean distance from each point to its `k` nearest neighbors (self excluded).
pub fn mean_knn_distances(cloud: &PointCloud, k: usize) -> Vec<f64> {
    let index = SpatialIndex::new(cloud);
    let mut buf = Vec::with_capacity(k + 1);
    cloud
        .points
        .iter()
        .map(|p| {
            index.knn_into(&p.position, k + 1, &mut buf);
            // The closest hit is the point itself (distance 0) unless
            // duplicates exist; dropping the first entry is equivalent.
            let d: f64 = buf.iter().skip(1).map(|n| libm::sqrt(n.dist_sq)).sum();
            d / (buf.len().saturating_sub(1)).max(1) as f64
        })
        .collect()
}

/// Removes points whose mean k-NN distance exceeds
/// `mean + stddev_mult · stddev` of that statistic over the whole cloud.
pub fn statistical_outlier_removal(
    cloud: &PointCloud,
    k: usize,
    stddev_mult: f64,
) -> Result<PointCloud> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if cloud.len() <= k {
        return Err(Error::InsufficientData {
            what: "points for outlier removal",
            needed: k + 1,
            got: cloud.len(),
        });
    }
    let dists = mean_knn_distances(cloud, k);
    let n = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / n;
    let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    // Relative slack so that rounding noise on equal distances is not
    // mistaken for spread.
    let threshold = mean + stddev_mult * libm::sqrt(var) + 1e-12 * mean;
    let keep: Vec<usize> = (0..cloud.len()).filter(|&i| dists[i] <= threshold).collect();
    Ok(cloud.select(&keep))
}

/// Keeps exactly the points whose class label is in `static_labels`.
pub fn filter_static(cloud: &PointCloud, static_labels: &[u16]) -> Result<PointCloud> {
    if cloud.points.iter().any(|p| p.class_label.is_none()) {
        return Err(Error::MissingAttribute {
            attribute: "class_label",
            hint: "set `pre.filter_static = false` to skip static-class filtering",
        });
    }
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            cloud.points[i]
                .class_label
                .is_some_and(|l| static_labels.contains(&l))
        })
        .collect();
    Ok(cloud.select(&keep))
}

/// Full preprocessing in order: voxel resampling, outlier removal, static-class
/// filtering (each skipped when disabled), then a stable sort by time when
/// every point carries one.
pub fn preprocess(cloud: &PointCloud, cfg: &PreprocessConfig) -> Result<PointCloud> {
    let mut out = if cfg.cell_size_m > 0.0 {
        voxel_downsample(cloud, cfg.cell_size_m)?
    } else {
        cloud.clone()
    };
    if cfg.sor_k > 0 && out.len() > cfg.sor_k {
        out = statistical_outlier_removal(&out, cfg.sor_k, cfg.sor_stddev)?;
    }
    if cfg.filter_static {
        out = filter_static(&out, &cfg.static_labels)?;
    }
    if out.has_times() {
        out.sort_by_time();
    }
    Ok(out)
}
