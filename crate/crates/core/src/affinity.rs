//! Superpoint scene graph: per-frame label histograms, their cosine
//! affinities, depth/visibility reliability weights and the frame-weighted
//! aggregate affinity on every adjacent superpoint pair.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mask_store::{SegmentationMap2D, BACKGROUND};
use crate::projection::{FrameProjection, ProjectionTable};
use crate::scalar::{sparse_cosine, Scalar};
use crate::superpoint::{Superpoint, SuperpointAdjacency};

/// Counts of visible projected points per mask label, sorted by label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelHistogram {
    pub counts: Vec<(i32, u32)>,
}

impl LabelHistogram {
    pub fn from_labels(labels: impl IntoIterator<Item = i32>) -> Self {
        let mut m = BTreeMap::new();
        for l in labels {
            if l != BACKGROUND {
                *m.entry(l).or_insert(0u32) += 1;
            }
        }
        Self { counts: m.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|c| c.1).sum()
    }

    fn as_scalar<T: Scalar>(&self) -> Vec<(i32, T)> {
        self.counts.iter().map(|&(l, c)| (l, T::from_count(c as usize))).collect()
    }
}

pub fn histogram_vector<T: Scalar>(sp: &Superpoint<T>, proj: &FrameProjection<T>, map: &SegmentationMap2D) -> LabelHistogram {
    LabelHistogram::from_labels(
        sp.point_indices
            .iter()
            .filter_map(|&i| proj.visible_pixel(i as usize))
            .map(|(x, y)| map.label(x, y)),
    )
}

/// Cosine similarity of two histograms from one frame; `None` when either is
/// empty (the frame carries no evidence for the pair).
pub fn frame_affinity<T: Scalar>(a: &LabelHistogram, b: &LabelHistogram) -> Option<T> {
    sparse_cosine(&a.as_scalar::<T>(), &b.as_scalar::<T>())
}

/// Mean per-point depth weight over the superpoint's visible points; `None`
/// when nothing is visible.
pub fn superpoint_depth_weight<T: Scalar>(sp: &Superpoint<T>, proj: &FrameProjection<T>) -> Option<T> {
    let mut n = 0usize;
    let mut sum = T::zero();
    for &i in &sp.point_indices {
        if proj.visible[i as usize] {
            n += 1;
            sum += proj.weight[i as usize];
        }
    }
    (n > 0).then(|| sum / T::from_count(n))
}

/// Fraction of the superpoint's points visible in the frame.
pub fn superpoint_visibility_weight<T: Scalar>(sp: &Superpoint<T>, proj: &FrameProjection<T>) -> T {
    let n = sp.point_indices.iter().filter(|&&i| proj.visible[i as usize]).count();
    T::from_count(n) / T::from_count(sp.point_count)
}

/// Reliability of one superpoint in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameWeights<T> {
    pub depth: T,
    pub visibility: T,
}

/// Product of both superpoints' depth and visibility weights.
pub fn edge_weight<T: Scalar>(i: FrameWeights<T>, j: FrameWeights<T>) -> T {
    i.depth * j.depth * i.visibility * j.visibility
}

/// Frame-weighted mean of per-frame affinities. `None` when no frame carries
/// positive weight.
pub fn aggregate_affinity<T: Scalar>(per_frame: &[(T, T)]) -> Option<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for &(a, phi) in per_frame {
        if phi > T::zero() {
            num += phi * a;
            den += phi;
        }
    }
    (den > T::zero()).then(|| (num / den).min(T::one()).max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EdgeAffinity<T: Scalar> {
    pub numerator: T,
    pub denominator: T,
    pub affinity: T,
    /// Frames that contributed to the sums.
    pub frames: u32,
}

/// Sparse symmetric affinity matrix restricted to adjacent superpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AffinityGraph<T: Scalar> {
    pub edges: BTreeMap<(u32, u32), EdgeAffinity<T>>,
    neighbors: Vec<Vec<(u32, T)>>,
}

impl<T: Scalar> AffinityGraph<T> {
    pub fn from_edges(n: usize, edges: BTreeMap<(u32, u32), EdgeAffinity<T>>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (&(a, b), e) in &edges {
            neighbors[a as usize].push((b, e.affinity));
            neighbors[b as usize].push((a, e.affinity));
        }
        for nb in &mut neighbors {
            nb.sort_by_key(|e| e.0);
        }
        Self { edges, neighbors }
    }

    /// Builds a graph from plain affinities (e.g. hand-made test graphs).
    pub fn from_affinities(n: usize, pairs: impl IntoIterator<Item = ((u32, u32), T)>) -> Self {
        let edges = pairs
            .into_iter()
            .map(|((a, b), aff)| {
                let key = if a < b { (a, b) } else { (b, a) };
                (key, EdgeAffinity { numerator: aff, denominator: T::one(), affinity: aff, frames: 1 })
            })
            .collect();
        Self::from_edges(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn affinity(&self, a: u32, b: u32) -> Option<T> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).map(|e| e.affinity)
    }

    /// Neighbours with a defined affinity, sorted by id.
    pub fn neighbors(&self, i: u32) -> &[(u32, T)] {
        &self.neighbors[i as usize]
    }

    /// One `{"i":..,"j":..,"affinity":..}` JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for (&(i, j), e) in &self.edges {
            s.push_str(&serde_json::json!({ "i": i, "j": j, "affinity": e.affinity.as_f64() }).to_string());
            s.push('\n');
        }
        s
    }
}

/// Everything the graph needs from one frame, per superpoint.
struct FrameStats<T> {
    hist: Vec<LabelHistogram>,
    weights: Vec<Option<FrameWeights<T>>>,
}

fn frame_stats<T: Scalar>(superpoints: &[Superpoint<T>], proj: &FrameProjection<T>, map: &SegmentationMap2D) -> FrameStats<T> {
    let mut hist = Vec::with_capacity(superpoints.len());
    let mut weights = Vec::with_capacity(superpoints.len());
    for sp in superpoints {
        hist.push(histogram_vector(sp, proj, map));
        weights.push(superpoint_depth_weight(sp, proj).map(|depth| FrameWeights {
            depth,
            visibility: superpoint_visibility_weight(sp, proj),
        }));
    }
    FrameStats { hist, weights }
}

/// Builds the affinity graph over adjacent superpoint pairs. `maps[f]` must
/// belong to `table.frames[f]`. Sums are accumulated in ascending frame-id
/// order regardless of input order.
pub fn build_graph<T: Scalar>(
    superpoints: &[Superpoint<T>],
    adjacency: &SuperpointAdjacency,
    table: &ProjectionTable<T>,
    maps: &[SegmentationMap2D],
) -> AffinityGraph<T> {
    assert_eq!(table.frames.len(), maps.len(), "one segmentation map per projected frame");
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by_key(|&f| table.frames[f].frame_id);
    let stats: Vec<FrameStats<T>> = order
        .par_iter()
        .map(|&f| frame_stats(superpoints, &table.frames[f], &maps[f]))
        .collect();

    let edges = adjacency
        .edges()
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(a, b)| {
            let mut num = T::zero();
            let mut den = T::zero();
            let mut frames = 0u32;
            for st in &stats {
                let (Some(wa), Some(wb)) = (st.weights[a as usize], st.weights[b as usize]) else {
                    continue;
                };
                let Some(aff) = frame_affinity::<T>(&st.hist[a as usize], &st.hist[b as usize]) else {
                    continue;
                };
                let phi = edge_weight(wa, wb);
                if phi > T::zero() {
                    num += phi * aff;
                    den += phi;
                    frames += 1;
                }
            }
            (den > T::zero()).then(|| {
                let affinity = (num / den).min(T::one()).max(T::zero());
                ((a, b), EdgeAffinity { numerator: num, denominator: den, affinity, frames })
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    AffinityGraph::from_edges(superpoints.len(), edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(pairs: &[(i32, u32)]) -> LabelHistogram {
        LabelHistogram { counts: pairs.to_vec() }
    }

    #[test]
    fn frame_affinity_cases() {
        assert_eq!(frame_affinity::<f64>(&h(&[(0, 3), (2, 5)]), &h(&[(0, 3), (2, 5)])), Some(1.0));
        assert_eq!(frame_affinity::<f64>(&h(&[(0, 3)]), &h(&[(1, 5)])), Some(0.0));
        let c = frame_affinity::<f64>(&h(&[(0, 1), (1, 1)]), &h(&[(1, 1), (2, 1)])).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        assert_eq!(frame_affinity::<f64>(&h(&[]), &h(&[(1, 1)])), None);
    }

    #[test]
    fn edge_weight_cases() {
        let one = FrameWeights { depth: 1.0, visibility: 1.0 };
        assert_eq!(edge_weight(one, one), 1.0);
        let half = FrameWeights { depth: 1.0, visibility: 0.5 };
        assert_eq!(edge_weight(half, half), 0.25);
        assert_eq!(edge_weight(one, FrameWeights { depth: 1.0, visibility: 0.0 }), 0.0);
    }

    #[test]
    fn aggregate_cases() {
        assert!((aggregate_affinity::<f64>(&[(0.8, 0.3)]).unwrap() - 0.8).abs() < 1e-12);
        assert!((aggregate_affinity::<f64>(&[(0.8, 0.2), (0.4, 0.2)]).unwrap() - 0.6).abs() < 1e-12);
        assert!((aggregate_affinity::<f64>(&[(1.0, 0.9), (0.0, 0.1)]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(aggregate_affinity::<f64>(&[(0.5, 0.0)]), None);
        assert_eq!(aggregate_affinity::<f64>(&[]), None);
    }
}
