//! Deterministic DBSCAN with k-d tree neighborhoods.
//!
//! Neighborhoods are closed (`≤ ε`) and include the point itself. Expansion
//! always proceeds from the lowest unvisited index, so border points that are
//! reachable from two clusters go to whichever cluster is expanded first.

use crate::spatial_index::KdTree;

/// Per-point DBSCAN output.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterLabels {
    /// `None` for noise, otherwise the cluster id in discovery order.
    pub labels: Vec<Option<usize>>,
    pub core: Vec<bool>,
    pub num_clusters: usize,
}

impl ClusterLabels {
    /// Member indices of every cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }
}

pub fn dbscan<const D: usize>(points: &[[f64; D]], eps: f64, minpts: usize) -> ClusterLabels {
    let n = points.len();
    let mut result = ClusterLabels { labels: vec![None; n], core: vec![false; n], num_clusters: 0 };
    let tree = match KdTree::build(points) {
        Ok(t) => t,
        Err(_) => return result,
    };

    // Every point is queried exactly once. Stored flat: neighbors of i are flat[offsets[i]..offsets[i + 1]].
    let mut offsets = Vec::with_capacity(n + 1);
    let mut flat: Vec<u32> = Vec::with_capacity(n * minpts.max(4));
    offsets.push(0);
    for (i, p) in points.iter().enumerate() {
        let start = flat.len();
        tree.for_each_in_range(p, eps, |j| flat.push(j as u32));
        result.core[i] = flat.len() - start >= minpts;
        offsets.push(flat.len());
    }

    let mut queue = Vec::new();
    for seed in 0..n {
        if !result.core[seed] || result.labels[seed].is_some() {
            continue;
        }
        let cluster = result.num_clusters;
        result.num_clusters += 1;
        result.labels[seed] = Some(cluster);
        queue.clear();
        queue.push(seed);
        let mut head = 0;
        while head < queue.len() {
            let p = queue[head];
            head += 1;
            if !result.core[p] {
                continue;
            }
            for &q in &flat[offsets[p]..offsets[p + 1]] {
                let q = q as usize;
                if result.labels[q].is_none() {
                    result.labels[q] = Some(cluster);
                    queue.push(q);
                }
            }
        }
    }
    result
}
