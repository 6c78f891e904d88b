//! KNN-affinity Laplacian in a joint intensity/position feature space.
//!
//! Each voxel `i` has feature `(v_i, s·x̂, s·ŷ, s·ẑ)` with coordinates
//! normalised to `[0, 1]` and `s` the spatial weight. Affinities
//! `a(i, j) = max(0, 1 − ‖X_i − X_j‖ / C)`, `C = √(1 + 3s²)`, connect every
//! voxel to its nearest neighbours; voxels tied with the k-th distance are
//! all included. `A` is symmetrised by `max` and `L = D − A`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::SparseSymMatrix;
use crate::error::{MatteError, Result};
use crate::volume::{Dims, HuWindow, Volume3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k_neighbors: usize,
    /// Multiplier on the normalised voxel coordinates.
    pub spatial_weight: f64,
    /// Maps HU volumes into `[0, 1]` before feature extraction.
    pub intensity_scale: HuWindow,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k_neighbors: 10,
            spatial_weight: 0.25,
            intensity_scale: HuWindow::default(),
        }
    }
}

/// Feature geometry shared by the tree search and any exhaustive check.
///
/// Squared distances depend on voxel offsets only through `|dx|, |dy|, |dz|`
/// so mirrored voxel pairs get bit-identical distances.
#[derive(Clone, Debug)]
pub struct FeatureSpace {
    dims: Dims,
    intensity: Vec<f64>,
    axis_scale: [f64; 3],
    diameter: f64,
}

impl FeatureSpace {
    pub fn new(intensity: Vec<f64>, dims: Dims, spatial_weight: f64) -> Result<Self> {
        if !(spatial_weight.is_finite() && spatial_weight >= 0.0) {
            return Err(MatteError::Argument(format!(
                "spatial_weight must be non-negative, got {spatial_weight}"
            )));
        }
        if intensity.len() != dims.len() {
            return Err(MatteError::Shape("intensity length does not match dims".into()));
        }
        let scale = |n: usize| {
            if n > 1 {
                spatial_weight / (n - 1) as f64
            } else {
                0.0
            }
        };
        Ok(FeatureSpace {
            dims,
            intensity,
            axis_scale: [scale(dims.nx), scale(dims.ny), scale(dims.nz)],
            diameter: (1.0 + 3.0 * spatial_weight * spatial_weight).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    pub fn feature(&self, i: usize) -> [f64; 4] {
        let (x, y, z) = self.dims.coords(i);
        [
            self.intensity[i],
            x as f64 * self.axis_scale[0],
            y as f64 * self.axis_scale[1],
            z as f64 * self.axis_scale[2],
        ]
    }

    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        let (xi, yi, zi) = self.dims.coords(i);
        let (xj, yj, zj) = self.dims.coords(j);
        let dv = self.intensity[i] - self.intensity[j];
        let ax = xi.abs_diff(xj) as f64 * self.axis_scale[0];
        let ay = yi.abs_diff(yj) as f64 * self.axis_scale[1];
        let az = zi.abs_diff(zj) as f64 * self.axis_scale[2];
        dv * dv + ax * ax + ay * ay + az * az
    }

    pub fn affinity(&self, d2: f64) -> f64 {
        (1.0 - d2.sqrt() / self.diameter).max(0.0)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact nearest-neighbour search over a [`FeatureSpace`].
struct KdTree<'a> {
    space: &'a FeatureSpace,
    features: Vec<[f64; 4]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(space: &'a FeatureSpace) -> Self {
        let features: Vec<[f64; 4]> = (0..space.len()).map(|i| space.feature(i)).collect();
        let mut tree = KdTree {
            space,
            order: (0..space.len()).collect(),
            features,
            nodes: Vec::new(),
        };
        let n = tree.order.len();
        tree.build_node(0, n);
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for &i in &self.order[start..end] {
            for (a, &f) in self.features[i].iter().enumerate() {
                lo[a] = lo[a].min(f);
                hi[a] = hi[a].max(f);
            }
        }
        let axis = (0..4)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap();
        let mid = start + (end - start) / 2;
        let feats = &self.features;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            feats[a][axis].total_cmp(&feats[b][axis]).then(a.cmp(&b))
        });
        let value = self.features[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest voxels to `query` (excluding itself) plus every voxel
    /// tied with the k-th distance, sorted by `(distance, index)`.
    fn neighbors(&self, query: usize, k: usize) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let qf = self.features[query];
        self.search(0, query, &qf, k, &mut heap);
        let mut out = heap.into_sorted_vec();
        if let Some(worst) = out.last().map(|c| c.d2) {
            let mut ties = Vec::new();
            self.collect_ties(0, query, &qf, worst, &mut ties);
            ties.retain(|c| out.binary_search(c).is_err());
            out.extend(ties);
            out.sort();
        }
        out
    }

    // Pruning uses the float features while candidates are scored with the
    // canonical distance, so the bound carries a small relative slack.
    fn may_contain(gap: f64, bound: f64) -> bool {
        gap * gap <= bound * (1.0 + 1e-9) + 1e-18
    }

    fn search(
        &self,
        node: usize,
        query: usize,
        qf: &[f64; 4],
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == query {
                        continue;
                    }
                    let c = Candidate {
                        d2: self.space.dist2(query, i),
                        idx: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let gap = qf[axis] - value;
                let (near, far) = if gap < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, qf, k, heap);
                if heap.len() < k || Self::may_contain(gap, heap.peek().unwrap().d2) {
                    self.search(far, query, qf, k, heap);
                }
            }
        }
    }

    fn collect_ties(&self, node: usize, query: usize, qf: &[f64; 4], d2: f64, out: &mut Vec<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i != query && self.space.dist2(query, i) == d2 {
                        out.push(Candidate { d2, idx: i });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let gap = qf[axis] - value;
                let (near, far) = if gap < 0.0 { (left, right) } else { (right, left) };
                self.collect_ties(near, query, qf, d2, out);
                if Self::may_contain(gap, d2) {
                    self.collect_ties(far, query, qf, d2, out);
                }
            }
        }
    }
}

/// Neighbour lists `(index, squared distance)` for every voxel.
pub fn knn_neighbors(space: &FeatureSpace, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    if k == 0 || k >= space.len() {
        return Err(MatteError::Argument(format!(
            "k_neighbors must satisfy 1 <= k < N = {}, got {k}",
            space.len()
        )));
    }
    let tree = KdTree::build(space);
    Ok((0..space.len())
        .into_par_iter()
        .map(|i| {
            tree.neighbors(i, k)
                .into_iter()
                .map(|c| (c.idx, c.d2))
                .collect()
        })
        .collect())
}

/// `L = D − A` from neighbour lists; `A` is the max-symmetrised affinity.
pub fn laplacian_from_neighbors(
    space: &FeatureSpace,
    neighbors: &[Vec<(usize, f64)>],
) -> Result<SparseSymMatrix> {
    let n = space.len();
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in neighbors.iter().enumerate() {
        for &(j, d2) in list {
            let a = space.affinity(d2);
            edges[i].push((j, a));
            edges[j].push((i, a));
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = edges
        .into_par_iter()
        .enumerate()
        .map(|(p, mut row)| {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len() + 1);
            for (q, a) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == q => last.1 = last.1.max(a),
                    _ => merged.push((q, a)),
                }
            }
            let degree: f64 = merged.iter().map(|e| e.1).sum();
            let mut out: Vec<(usize, f64)> = merged
                .into_iter()
                .filter(|e| e.1 > 0.0)
                .map(|(q, a)| (q, -a))
                .collect();
            let pos = out.partition_point(|e| e.0 < p);
            out.insert(pos, (p, degree));
            out
        })
        .collect();
    SparseSymMatrix::from_sorted_rows(rows)
}

/// Assembles the KNN Laplacian of `v`.
pub fn build_knn_laplacian(v: &Volume3, cfg: &KnnConfig) -> Result<SparseSymMatrix> {
    let intensity = cfg.intensity_scale.intensities(v)?;
    let space = FeatureSpace::new(intensity, v.dims(), cfg.spatial_weight)?;
    let neighbors = knn_neighbors(&space, cfg.k_neighbors)?;
    laplacian_from_neighbors(&space, &neighbors)
}
