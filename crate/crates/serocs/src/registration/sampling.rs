//! Cloud preprocessing: voxel-grid downsampling and density clustering.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::PointCloud;

/// Replace every occupied voxel (grid anchored at the coordinate origin)
/// by the centroid of its members. Output order follows the first
/// appearance of each voxel in the input.
pub fn voxel_downsample(cloud: &PointCloud, step: f64) -> Result<PointCloud> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::input("voxel step must be > 0"));
    }
    let pts = cloud.points();
    let d = cloud.dim();
    let mut cells: HashMap<Vec<i64>, (Vec<f64>, usize)> = HashMap::new();
    let mut order: Vec<Vec<i64>> = Vec::new();
    for i in 0..pts.nrows() {
        let mut key = Vec::with_capacity(d);
        for c in 0..d {
            let idx = (pts[(i, c)] / step).floor();
            if !(idx.abs() < 9.0e15) {
                return Err(Error::input("point too large for the voxel grid"));
            }
            key.push(idx as i64);
        }
        let entry = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (vec![0.0; d], 0)
        });
        for c in 0..d {
            entry.0[c] += pts[(i, c)];
        }
        entry.1 += 1;
    }
    let m = DMatrix::from_fn(order.len(), d, |i, j| {
        let (sum, count) = &cells[&order[i]];
        sum[j] / *count as f64
    });
    PointCloud::new(m, cloud.label())
}

/// Standard density-based clustering. Returns the clusters in discovery
/// order (labels `cluster_0`, `cluster_1`, ...), followed by a cloud
/// labeled `noise` when any point is left unassigned.
pub fn euclidean_cluster(
    cloud: &PointCloud,
    eps: f64,
    min_pts: usize,
) -> Result<Vec<PointCloud>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::input("eps must be > 0"));
    }
    if min_pts == 0 {
        return Err(Error::input("min_pts must be >= 1"));
    }
    let pts = cloud.points();
    let n = pts.nrows();
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..pts.ncols() {
                let diff = pts[(i, c)] - pts[(j, c)];
                s += diff * diff;
            }
            if s <= eps2 {
                out.push(j);
            }
        }
        out
    };

    const UNVISITED: i64 = -2;
    const NOISE: i64 = -1;
    let mut label = vec![UNVISITED; n];
    let mut cluster = 0i64;
    for i in 0..n {
        if label[i] != UNVISITED {
            continue;
        }
        let nbrs = neighbors(i);
        if nbrs.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        label[i] = cluster;
        let mut queue: Vec<usize> = nbrs;
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if label[j] == NOISE {
                label[j] = cluster; // border point adopted by this cluster
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = cluster;
            let jn = neighbors(j);
            if jn.len() >= min_pts {
                queue.extend(jn);
            }
        }
        cluster += 1;
    }

    let mut out = Vec::new();
    for c in 0..cluster {
        let rows: Vec<usize> = (0..n).filter(|&i| label[i] == c).collect();
        let m = DMatrix::from_fn(rows.len(), pts.ncols(), |i, j| pts[(rows[i], j)]);
        out.push(PointCloud::new(m, format!("cluster_{}", c))?);
    }
    let noise_rows: Vec<usize> = (0..n).filter(|&i| label[i] == NOISE).collect();
    if !noise_rows.is_empty() {
        let m = DMatrix::from_fn(noise_rows.len(), pts.ncols(), |i, j| {
            pts[(noise_rows[i], j)]
        });
        out.push(PointCloud::new(m, "noise")?);
    }
    Ok(out)
}
