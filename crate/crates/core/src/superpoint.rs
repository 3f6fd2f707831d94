//! Graph-based over-segmentation of the point cloud into superpoints.
//!
//! A symmetric k-NN graph is segmented with the Felzenszwalb-Huttenlocher
//! criterion (merge when the edge weight does not exceed either component's
//! internal difference plus `weight_scale / |C|`), followed by a pass that
//! absorbs components smaller than `min_size`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::scalar::{dist3, dot3, Scalar, Vec3};
use crate::scene::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEdge<T> {
    pub a: u32,
    pub b: u32,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Superpoint<T: Scalar> {
    pub id: u32,
    /// Sorted indices into the point cloud.
    pub point_indices: Vec<u32>,
    pub centroid: Vec3<T>,
    pub point_count: usize,
}

impl<T: Scalar> Superpoint<T> {
    pub fn from_indices(id: u32, mut point_indices: Vec<u32>, positions: &[Vec3<T>]) -> Self {
        point_indices.sort_unstable();
        let n = T::from_count(point_indices.len());
        let mut c = [T::zero(); 3];
        for &i in &point_indices {
            for a in 0..3 {
                c[a] += positions[i as usize][a];
            }
        }
        let centroid = c.map(|v| v / n);
        let point_count = point_indices.len();
        Self { id, point_indices, centroid, point_count }
    }
}

/// Default `normal_weight`: the factor becomes `1.5 - 0.5 <n_a, n_b>`.
pub const DEFAULT_NORMAL_WEIGHT: f64 = 0.5;

/// Dissimilarity between two neighbouring points: Euclidean distance, scaled
/// by `1 + normal_weight (1 - <n_a, n_b>)` when normals are available.
fn dissimilarity<T: Scalar>(cloud: &PointCloud<T>, a: usize, b: usize, normal_weight: T) -> T {
    let d = dist3(&cloud.positions[a], &cloud.positions[b]);
    match &cloud.normals {
        Some(n) => d * (T::one() + normal_weight * (T::one() - dot3(&n[a], &n[b]))),
        None => d,
    }
}

/// Symmetric k-NN graph with the default normal weight.
pub fn build_knn_graph<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<Vec<PointEdge<T>>> {
    build_knn_graph_weighted(cloud, k, T::lit(DEFAULT_NORMAL_WEIGHT))
}

/// Symmetric k-NN graph; edges are unique `(a < b)` pairs sorted by `(a, b)`.
pub fn build_knn_graph_weighted<T: Scalar>(cloud: &PointCloud<T>, k: usize, normal_weight: T) -> Result<Vec<PointEdge<T>>> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::DegenerateCloud(format!("{n} point(s); need at least 2")));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("k = {k} must satisfy 1 <= k < {n}")));
    }
    let tree = KdTree::new(&cloud.positions);
    let neighbours: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| tree.knn(&cloud.positions[i], k, Some(i as u32)).into_iter().map(|e| e.1).collect())
        .collect();
    let mut pairs = BTreeSet::new();
    for (i, nb) in neighbours.iter().enumerate() {
        for &j in nb {
            let (a, b) = if (i as u32) < j { (i as u32, j) } else { (j, i as u32) };
            pairs.insert((a, b));
        }
    }
    Ok(pairs
        .into_iter()
        .map(|(a, b)| PointEdge { a, b, weight: dissimilarity(cloud, a as usize, b as usize, normal_weight) })
        .collect())
}

struct DisjointSet<T> {
    parent: Vec<u32>,
    size: Vec<usize>,
    internal: Vec<T>,
}

impl<T: Scalar> DisjointSet<T> {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n], internal: vec![T::zero(); n] }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32, w: T) {
        let (big, small) = if self.size[a as usize] > self.size[b as usize] || (self.size[a as usize] == self.size[b as usize] && a < b) {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        // edges arrive in ascending order, so w is the new MST maximum
        self.internal[big as usize] = w.max(self.internal[big as usize]).max(self.internal[small as usize]);
    }
}

fn sorted_edges<T: Scalar>(edges: &[PointEdge<T>]) -> Vec<PointEdge<T>> {
    let mut sorted = edges.to_vec();
    sorted.sort_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    sorted
}

/// Segments the point graph into superpoints. Superpoint ids are assigned in
/// order of each component's smallest point index.
pub fn felzenszwalb_segment<T: Scalar>(
    cloud: &PointCloud<T>,
    edges: &[PointEdge<T>],
    weight_scale: T,
    min_size: usize,
) -> Vec<Superpoint<T>> {
    let n = cloud.len();
    let sorted = sorted_edges(edges);
    let mut ds = DisjointSet::<T>::new(n);
    for e in &sorted {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra == rb {
            continue;
        }
        let ta = ds.internal[ra as usize] + weight_scale / T::from_count(ds.size[ra as usize]);
        let tb = ds.internal[rb as usize] + weight_scale / T::from_count(ds.size[rb as usize]);
        if e.weight <= ta.min(tb) {
            ds.union(ra, rb, e.weight);
        }
    }
    for e in &sorted {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra != rb && (ds.size[ra as usize] < min_size || ds.size[rb as usize] < min_size) {
            ds.union(ra, rb, e.weight);
        }
    }
    let roots: Vec<u32> = (0..n as u32).map(|i| ds.find(i)).collect();
    superpoints_from_labels(cloud, &roots)
}

/// Groups points by an arbitrary per-point label (e.g. a precomputed
/// superpoint file). Ids are dense, ordered by each group's smallest point.
pub fn superpoints_from_labels<T: Scalar, L: Copy + Ord>(cloud: &PointCloud<T>, labels: &[L]) -> Vec<Superpoint<T>> {
    let mut id_of = std::collections::BTreeMap::new();
    let mut groups: Vec<Vec<u32>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let id = *id_of.entry(l).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[id].push(i as u32);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(id, idx)| Superpoint::from_indices(id as u32, idx, &cloud.positions))
        .collect()
}

/// Per-point superpoint id.
pub fn point_labels<T: Scalar>(superpoints: &[Superpoint<T>], n_points: usize) -> Vec<u32> {
    let mut out = vec![u32::MAX; n_points];
    for sp in superpoints {
        for &i in &sp.point_indices {
            out[i as usize] = sp.id;
        }
    }
    out
}

/// Superpoint pairs connected by at least one point edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperpointAdjacency {
    neighbors: Vec<Vec<u32>>,
}

impl SuperpointAdjacency {
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for (a, b) in pairs {
            if a != b {
                sets[a as usize].insert(b);
                sets[b as usize].insert(a);
            }
        }
        Self { neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Sorted neighbours of superpoint `i`.
    pub fn neighbors(&self, i: u32) -> &[u32] {
        &self.neighbors[i as usize]
    }

    pub fn contains(&self, a: u32, b: u32) -> bool {
        self.neighbors[a as usize].binary_search(&b).is_ok()
    }

    /// Unique `(a, b)` pairs with `a < b`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, nb)| nb.iter().filter(move |&&b| b > a as u32).map(move |&b| (a as u32, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }
}

pub fn compute_adjacency<T: Scalar>(superpoints: &[Superpoint<T>], point_edges: &[PointEdge<T>], n_points: usize) -> SuperpointAdjacency {
    let label = point_labels(superpoints, n_points);
    SuperpointAdjacency::from_pairs(
        superpoints.len(),
        point_edges.iter().filter_map(|e| {
            let (a, b) = (label[e.a as usize], label[e.b as usize]);
            (a != b).then_some((a, b))
        }),
    )
}
