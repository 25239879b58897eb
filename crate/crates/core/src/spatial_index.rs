//! Static k-d tree with exact radius search.
//!
//! Used twice: over the 2-D `(‖m_xy‖, m_z)` feature plane of the map, and over
//! the 5-D embedded vote space during clustering. Only range queries are
//! supported; there is no k-NN and no dynamic insertion.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("cannot build a k-d tree from an empty point set")]
    EmptyInput,
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { dim: u8, value: f64, left: u32, right: u32 },
}

/// Immutable k-d tree over `D`-dimensional points. Ids are the positions of
/// the points in the input slice.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    // Points permuted so every leaf owns a contiguous range, with their ids.
    points: Vec<[f64; D]>,
    ids: Vec<u32>,
    // Input-order view for `point`.
    by_id: Vec<u32>,
    nodes: Vec<Node>,
}

impl<const D: usize> KdTree<D> {
    /// Builds the tree. Splits at the median of the widest-spread dimension;
    /// ties on the split coordinate are broken by id, so the layout depends
    /// only on the input order.
    pub fn build(points: &[[f64; D]]) -> Result<Self, IndexError> {
        if points.is_empty() {
            return Err(IndexError::EmptyInput);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(IndexError::NonFinite(i));
        }
        let mut items: Vec<([f64; D], u32)> = points.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&mut items, 0, &mut nodes);
        let mut by_id = vec![0u32; items.len()];
        for (slot, (_, id)) in items.iter().enumerate() {
            by_id[*id as usize] = slot as u32;
        }
        let (points, ids) = items.into_iter().unzip();
        Ok(KdTree { points, ids, by_id, nodes })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: usize) -> &[f64; D] {
        &self.points[self.by_id[id] as usize]
    }

    /// Ids of all points with `‖p − center‖ ≤ radius`, in ascending order.
    pub fn range_query(&self, center: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.range_query_into(center, radius, &mut out);
        out.sort_unstable();
        out
    }

    /// Appends matching ids to `out` in tree order (unsorted).
    pub fn range_query_into(&self, center: &[f64; D], radius: f64, out: &mut Vec<usize>) {
        self.for_each_in_range(center, radius, |id| out.push(id));
    }

    /// Calls `visit` on every id within `radius` of `center`, boundary
    /// included.
    pub fn for_each_in_range<F: FnMut(usize)>(&self, center: &[f64; D], radius: f64, mut visit: F) {
        if !(radius >= 0.0) {
            return;
        }
        self.visit_node(0, center, radius * radius, [0.0; D], 0.0, &mut visit);
    }

    // `off[d]` is the per-axis gap between `center` and the node's cell and
    // `rd` their squared sum, a lower bound on the distance to any point in
    // the node.
    fn visit_node<F: FnMut(usize)>(&self, node: u32, center: &[f64; D], r2: f64, mut off: [f64; D], rd: f64, visit: &mut F) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                let (start, end) = (start as usize, end as usize);
                for (p, &id) in self.points[start..end].iter().zip(&self.ids[start..end]) {
                    let mut d2 = 0.0;
                    for d in 0..D {
                        let diff = p[d] - center[d];
                        d2 += diff * diff;
                    }
                    if d2 <= r2 {
                        visit(id as usize);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                // Left holds coordinates <= value, right holds >= value.
                let d = dim as usize;
                let diff = center[d] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.visit_node(near, center, r2, off, rd, visit);
                let old = off[d];
                let rd_far = rd - old * old + diff * diff;
                if rd_far <= r2 {
                    off[d] = diff;
                    self.visit_node(far, center, r2, off, rd_far, visit);
                }
            }
        }
    }
}

fn build_node<const D: usize>(items: &mut [([f64; D], u32)], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    let n = items.len();
    if n <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + n) as u32 });
        return id;
    }
    let dim = widest_dim(items);
    let mid = n / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[dim].total_cmp(&b.0[dim]).then(a.1.cmp(&b.1)));
    let value = items[mid].0[dim];
    // Placeholder, patched once children exist.
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = items.split_at_mut(mid);
    let left = build_node(lo, offset, nodes);
    let right = build_node(hi, offset + mid, nodes);
    nodes[id as usize] = Node::Split { dim: dim as u8, value, left, right };
    id
}

fn widest_dim<const D: usize>(items: &[([f64; D], u32)]) -> usize {
    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for (p, _) in items {
        for d in 0..D {
            if p[d] < lo[d] {
                lo[d] = p[d];
            }
            if p[d] > hi[d] {
                hi[d] = p[d];
            }
        }
    }
    (0..D).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap_or(0)
}
