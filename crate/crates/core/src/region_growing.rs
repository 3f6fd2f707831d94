//! Threshold-gated region growing of superpoints into coarse 3-D segments.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::scalar::{dist3, Scalar, Vec3};
use crate::superpoint::{Superpoint, SuperpointAdjacency};

pub const UNASSIGNED: i32 = -1;

/// Assignment of superpoints to regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SegmentationState<T: Scalar> {
    /// Region id per superpoint, [`UNASSIGNED`] while growing.
    pub assignment: Vec<i32>,
    /// Sorted member superpoints per region.
    pub regions: Vec<Vec<u32>>,
    pub point_counts: Vec<usize>,
    pub centroids: Vec<Vec3<T>>,
}

impl<T: Scalar> SegmentationState<T> {
    /// Builds a consistent state from a full assignment, renumbering region ids
    /// densely in ascending order of the original ids.
    pub fn from_assignment(superpoints: &[Superpoint<T>], assignment: &[i32]) -> Self {
        let mut ids: Vec<i32> = assignment.iter().copied().filter(|&r| r >= 0).collect();
        ids.sort_unstable();
        ids.dedup();
        let remap = |r: i32| ids.binary_search(&r).map(|i| i as i32).unwrap_or(UNASSIGNED);
        let assignment: Vec<i32> = assignment.iter().map(|&r| remap(r)).collect();
        let mut regions = vec![Vec::new(); ids.len()];
        for (sp, &r) in assignment.iter().enumerate() {
            if r >= 0 {
                regions[r as usize].push(sp as u32);
            }
        }
        let mut state = Self { assignment, regions, point_counts: Vec::new(), centroids: Vec::new() };
        state.refresh_stats(superpoints);
        state
    }

    fn refresh_stats(&mut self, superpoints: &[Superpoint<T>]) {
        self.point_counts = self
            .regions
            .iter()
            .map(|m| m.iter().map(|&s| superpoints[s as usize].point_count).sum())
            .collect();
        self.centroids = self
            .regions
            .iter()
            .zip(&self.point_counts)
            .map(|(m, &n)| {
                let mut c = [T::zero(); 3];
                for &s in m {
                    let sp = &superpoints[s as usize];
                    let w = T::from_count(sp.point_count);
                    for a in 0..3 {
                        c[a] += sp.centroid[a] * w;
                    }
                }
                c.map(|v| v / T::from_count(n.max(1)))
            })
            .collect();
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Region label per point (`-1` for points outside every superpoint).
    pub fn point_labels(&self, superpoints: &[Superpoint<T>], n_points: usize) -> Vec<i32> {
        let mut out = vec![UNASSIGNED; n_points];
        for sp in superpoints {
            let r = self.assignment[sp.id as usize];
            for &i in &sp.point_indices {
                out[i as usize] = r;
            }
        }
        out
    }

    /// True when assignment and region lists agree and no region is empty.
    pub fn is_consistent(&self) -> bool {
        if self.regions.iter().any(|m| m.is_empty()) {
            return false;
        }
        let mut seen = vec![false; self.assignment.len()];
        for (r, members) in self.regions.iter().enumerate() {
            for &s in members {
                if self.assignment[s as usize] != r as i32 || seen[s as usize] {
                    return false;
                }
                seen[s as usize] = true;
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// How much a region member counts when scoring a candidate against a region.
pub trait NeighborWeighting<T: Scalar>: Sync {
    fn weight(&self, candidate: &Superpoint<T>, neighbor: &Superpoint<T>) -> T;
}

/// `point_count / (epsilon + centroid distance)`: closer and larger
/// neighbours dominate.
#[derive(Debug, Clone, Copy)]
pub struct CountOverDistance<T> {
    pub epsilon: T,
}

impl<T: Scalar> Default for CountOverDistance<T> {
    fn default() -> Self {
        Self { epsilon: T::lit(1e-6) }
    }
}

impl<T: Scalar> NeighborWeighting<T> for CountOverDistance<T> {
    fn weight(&self, candidate: &Superpoint<T>, neighbor: &Superpoint<T>) -> T {
        T::from_count(neighbor.point_count) / (self.epsilon + dist3(&candidate.centroid, &neighbor.centroid))
    }
}

/// Plain mean over adjacent members.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformWeighting;

impl<T: Scalar> NeighborWeighting<T> for UniformWeighting {
    fn weight(&self, _: &Superpoint<T>, _: &Superpoint<T>) -> T {
        T::one()
    }
}

/// Weighted mean affinity between `candidate` and the members of a region
/// that share a graph edge with it. `in_region` decides membership; the
/// candidate itself never counts. `None` when no member has an edge.
pub fn neighbor_weighted_affinity<T: Scalar>(
    candidate: u32,
    in_region: impl Fn(u32) -> bool,
    graph: &AffinityGraph<T>,
    superpoints: &[Superpoint<T>],
    weighting: &dyn NeighborWeighting<T>,
) -> Option<T> {
    let cand = &superpoints[candidate as usize];
    let mut num = T::zero();
    let mut den = T::zero();
    let mut uniform: Option<Option<T>> = None;
    for &(n, aff) in graph.neighbors(candidate) {
        if n == candidate || !in_region(n) {
            continue;
        }
        let w = weighting.weight(cand, &superpoints[n as usize]);
        num += w * aff;
        den += w;
        uniform = match uniform {
            None => Some(Some(aff)),
            Some(Some(a)) if a == aff => Some(Some(a)),
            _ => Some(None),
        };
    }
    if den <= T::zero() {
        return None;
    }
    // equal affinities average to themselves exactly
    Some(match uniform {
        Some(Some(a)) => a,
        _ => (num / den).min(T::one()).max(T::zero()),
    })
}

/// Seed order: point count descending, id ascending.
fn seed_order<T: Scalar>(superpoints: &[Superpoint<T>]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..superpoints.len() as u32).collect();
    order.sort_by(|&a, &b| {
        superpoints[b as usize].point_count.cmp(&superpoints[a as usize].point_count).then(a.cmp(&b))
    });
    order
}

/// Grows regions breadth-first from the largest unassigned superpoint. An
/// unassigned neighbour joins when its weighted affinity to the current
/// region strictly exceeds `tau_merge`; it is re-examined each time another
/// adjacent member is expanded.
pub fn grow<T: Scalar>(
    superpoints: &[Superpoint<T>],
    adjacency: &SuperpointAdjacency,
    graph: &AffinityGraph<T>,
    tau_merge: T,
    weighting: &dyn NeighborWeighting<T>,
) -> SegmentationState<T> {
    let mut assignment = vec![UNASSIGNED; superpoints.len()];
    let mut next_region = 0i32;
    let mut queue = VecDeque::new();
    for seed in seed_order(superpoints) {
        if assignment[seed as usize] != UNASSIGNED {
            continue;
        }
        let region = next_region;
        next_region += 1;
        assignment[seed as usize] = region;
        queue.push_back(seed);
        while let Some(m) = queue.pop_front() {
            for &n in adjacency.neighbors(m) {
                if assignment[n as usize] != UNASSIGNED {
                    continue;
                }
                let score = neighbor_weighted_affinity(n, |s| assignment[s as usize] == region, graph, superpoints, weighting);
                if matches!(score, Some(s) if s > tau_merge) {
                    assignment[n as usize] = region;
                    queue.push_back(n);
                }
            }
        }
    }
    SegmentationState::from_assignment(superpoints, &assignment)
}
