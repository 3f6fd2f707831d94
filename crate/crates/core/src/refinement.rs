//! Boundary-superpoint reassignment driven by the refined affinity graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::region_growing::{neighbor_weighted_affinity, NeighborWeighting, SegmentationState};
use crate::scalar::Scalar;
use crate::superpoint::{Superpoint, SuperpointAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub superpoint: u32,
    pub from: u32,
    pub to: u32,
}

/// Two regions joined by the merge pass, with their pooled affinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub kept: u32,
    pub absorbed: u32,
    pub affinity: f64,
}

/// Moves made in each iteration, in visit order, then the region merges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub iterations: Vec<Vec<Move>>,
    #[serde(default)]
    pub merges: Vec<Merge>,
}

impl RefinementTrace {
    pub fn total_moves(&self) -> usize {
        self.iterations.iter().map(Vec::len).sum()
    }

    /// True when the last iteration made no move.
    pub fn converged(&self) -> bool {
        self.iterations.last().is_some_and(|m| m.is_empty())
    }
}

/// Superpoints with at least one adjacency edge into another region, ascending.
pub fn boundary_superpoints(assignment: &[i32], adjacency: &SuperpointAdjacency) -> Vec<u32> {
    (0..assignment.len() as u32)
        .filter(|&s| adjacency.neighbors(s).iter().any(|&n| assignment[n as usize] != assignment[s as usize]))
        .collect()
}

/// Score of `sp` against region `r`; undefined scores count as zero.
fn region_score<T: Scalar>(
    sp: u32,
    r: i32,
    assignment: &[i32],
    graph: &AffinityGraph<T>,
    superpoints: &[Superpoint<T>],
    weighting: &dyn NeighborWeighting<T>,
) -> Option<T> {
    neighbor_weighted_affinity(sp, |s| assignment[s as usize] == r, graph, superpoints, weighting)
}

/// Iteratively moves each boundary superpoint to the adjacent region it has
/// the highest affinity with, when that strictly beats its current region.
/// Moves apply immediately. Stops after an iteration without moves or after
/// `max_iters` iterations; emptied regions are dropped and ids recompacted.
pub fn refine<T: Scalar>(
    state: &SegmentationState<T>,
    superpoints: &[Superpoint<T>],
    adjacency: &SuperpointAdjacency,
    graph: &AffinityGraph<T>,
    max_iters: usize,
    weighting: &dyn NeighborWeighting<T>,
) -> (SegmentationState<T>, RefinementTrace) {
    let mut assignment = state.assignment.clone();
    let mut trace = RefinementTrace::default();
    for _ in 0..max_iters {
        let mut moves = Vec::new();
        for sp in boundary_superpoints(&assignment, adjacency) {
            let current = assignment[sp as usize];
            let current_score =
                region_score(sp, current, &assignment, graph, superpoints, weighting).unwrap_or_else(T::zero);
            let mut targets: Vec<i32> = adjacency
                .neighbors(sp)
                .iter()
                .map(|&n| assignment[n as usize])
                .filter(|&r| r != current)
                .collect();
            targets.sort_unstable();
            targets.dedup();
            let mut best: Option<(i32, T)> = None;
            for r in targets {
                if let Some(s) = region_score(sp, r, &assignment, graph, superpoints, weighting) {
                    if best.is_none_or(|(_, b)| s > b) {
                        best = Some((r, s));
                    }
                }
            }
            if let Some((to, s)) = best {
                if s > current_score {
                    assignment[sp as usize] = to;
                    moves.push(Move { superpoint: sp, from: current as u32, to: to as u32 });
                }
            }
        }
        let done = moves.is_empty();
        trace.iterations.push(moves);
        if done {
            break;
        }
    }
    (SegmentationState::from_assignment(superpoints, &assignment), trace)
}

/// Weighted affinity sums from one region towards another.
#[derive(Clone, Copy)]
struct Pool<T> {
    num: T,
    den: T,
    // Some(a) while every pooled affinity equals a
    uniform: Option<T>,
}

impl<T: Scalar> Pool<T> {
    fn add(&mut self, other: &Pool<T>) {
        self.num += other.num;
        self.den += other.den;
        self.uniform = match (self.uniform, other.uniform) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        };
    }

    fn value(&self) -> Option<T> {
        if self.den <= T::zero() {
            return None;
        }
        Some(self.uniform.unwrap_or_else(|| (self.num / self.den).min(T::one()).max(T::zero())))
    }
}

/// Pooled directional affinities `from -> to` over all graph edges that cross
/// between two distinct regions.
fn region_pools<T: Scalar>(
    assignment: &[i32],
    graph: &AffinityGraph<T>,
    superpoints: &[Superpoint<T>],
    weighting: &dyn NeighborWeighting<T>,
) -> BTreeMap<(i32, i32), Pool<T>> {
    let mut pools: BTreeMap<(i32, i32), Pool<T>> = BTreeMap::new();
    for s in 0..assignment.len() as u32 {
        let rs = assignment[s as usize];
        for &(n, aff) in graph.neighbors(s) {
            let rn = assignment[n as usize];
            if rn == rs {
                continue;
            }
            let w = weighting.weight(&superpoints[s as usize], &superpoints[n as usize]);
            let edge = Pool { num: w * aff, den: w, uniform: Some(aff) };
            pools.entry((rs, rn)).and_modify(|p| p.add(&edge)).or_insert(edge);
        }
    }
    pools
}

fn pair_score<T: Scalar>(pools: &BTreeMap<(i32, i32), Pool<T>>, a: i32, b: i32) -> Option<T> {
    let ab = pools.get(&(a, b))?.value()?;
    let ba = pools.get(&(b, a))?.value()?;
    Some(ab.min(ba))
}

/// Greedily joins adjacent regions whose affinity, pooled over every crossing
/// edge and taken as the smaller of the two directions, exceeds `tau_merge`.
/// The best pair merges first (ties by smaller ids); the lower id survives.
/// A state produced by region growing on the same graph is left unchanged.
pub fn merge_regions<T: Scalar>(
    assignment: &mut [i32],
    graph: &AffinityGraph<T>,
    superpoints: &[Superpoint<T>],
    tau_merge: T,
    weighting: &dyn NeighborWeighting<T>,
) -> Vec<Merge> {
    let mut pools = region_pools(assignment, graph, superpoints, weighting);
    let mut parent: BTreeMap<i32, i32> = BTreeMap::new();
    let mut merges = Vec::new();
    loop {
        let mut best: Option<(i32, i32, T)> = None;
        for &(a, b) in pools.keys() {
            if a >= b {
                continue;
            }
            if let Some(s) = pair_score(&pools, a, b) {
                if s > tau_merge && best.is_none_or(|(_, _, bs)| s > bs) {
                    best = Some((a, b, s));
                }
            }
        }
        let Some((keep, gone, score)) = best else { break };
        merges.push(Merge { kept: keep as u32, absorbed: gone as u32, affinity: score.to_f64().unwrap_or(0.0) });
        parent.insert(gone, keep);
        let mut next: BTreeMap<(i32, i32), Pool<T>> = BTreeMap::new();
        for (&(a, b), p) in &pools {
            let a = if a == gone { keep } else { a };
            let b = if b == gone { keep } else { b };
            if a != b {
                next.entry((a, b)).and_modify(|q| q.add(p)).or_insert(*p);
            }
        }
        pools = next;
    }
    if !merges.is_empty() {
        let root = |mut r: i32| {
            while let Some(&p) = parent.get(&r) {
                r = p;
            }
            r
        };
        for r in assignment.iter_mut() {
            *r = root(*r);
        }
    }
    merges
}

/// Reassignment followed, when `merge` is set, by the region merge pass.
pub fn refine_and_merge<T: Scalar>(
    state: &SegmentationState<T>,
    superpoints: &[Superpoint<T>],
    adjacency: &SuperpointAdjacency,
    graph: &AffinityGraph<T>,
    max_iters: usize,
    tau_merge: T,
    merge: bool,
    weighting: &dyn NeighborWeighting<T>,
) -> (SegmentationState<T>, RefinementTrace) {
    let (moved, mut trace) = refine(state, superpoints, adjacency, graph, max_iters, weighting);
    if !merge {
        return (moved, trace);
    }
    let mut assignment = moved.assignment.clone();
    trace.merges = merge_regions(&mut assignment, graph, superpoints, tau_merge, weighting);
    if trace.merges.is_empty() {
        return (moved, trace);
    }
    (SegmentationState::from_assignment(superpoints, &assignment), trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region_growing::{CountOverDistance, UniformWeighting};

    fn sp(id: u32, count: usize, x: f64) -> Superpoint<f64> {
        Superpoint { id, point_indices: vec![id], centroid: [x, 0.0, 0.0], point_count: count }
    }

    #[test]
    fn boundary_cases() {
        let adj = SuperpointAdjacency::from_pairs(4, [(0, 1), (1, 2), (2, 3)]);
        assert!(boundary_superpoints(&[0, 0, 0, 0], &adj).is_empty());
        assert_eq!(boundary_superpoints(&[0, 0, 1, 1], &adj), vec![1, 2]);
        let adj = SuperpointAdjacency::from_pairs(5, [(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(boundary_superpoints(&[0, 1, 1, 1, 2], &adj), vec![0, 1, 3, 4]);
    }

    #[test]
    fn fixed_point_makes_no_moves() {
        let sps: Vec<_> = (0..4).map(|i| sp(i, 10, i as f64)).collect();
        let adj = SuperpointAdjacency::from_pairs(4, [(0, 1), (1, 2), (2, 3)]);
        let g = AffinityGraph::from_affinities(4, [((0, 1), 0.9), ((1, 2), 0.1), ((2, 3), 0.9)]);
        let st = SegmentationState::from_assignment(&sps, &[0, 0, 1, 1]);
        let (out, trace) = refine(&st, &sps, &adj, &g, 10, &CountOverDistance::default());
        assert_eq!(out, st);
        assert_eq!(trace.iterations, vec![vec![]]);
    }

    #[test]
    fn misassigned_superpoint_moves_once() {
        // 2 belongs with 3 but was grown into 0's region
        let sps: Vec<_> = (0..4).map(|i| sp(i, 10, i as f64)).collect();
        let adj = SuperpointAdjacency::from_pairs(4, [(0, 1), (1, 2), (2, 3)]);
        let g = AffinityGraph::from_affinities(4, [((0, 1), 0.9), ((1, 2), 0.2), ((2, 3), 0.8)]);
        let st = SegmentationState::from_assignment(&sps, &[0, 0, 0, 1]);
        let (out, trace) = refine(&st, &sps, &adj, &g, 10, &UniformWeighting);
        assert_eq!(trace.iterations, vec![vec![Move { superpoint: 2, from: 0, to: 1 }], vec![]]);
        assert_eq!(out.assignment, vec![0, 0, 1, 1]);
        assert!(trace.converged());
    }

    #[test]
    fn iteration_cap_bounds_trace() {
        let sps: Vec<_> = (0..4).map(|i| sp(i, 10, i as f64)).collect();
        let adj = SuperpointAdjacency::from_pairs(4, [(0, 1), (1, 2), (2, 3)]);
        let g = AffinityGraph::from_affinities(4, [((0, 1), 0.9), ((1, 2), 0.2), ((2, 3), 0.8)]);
        let st = SegmentationState::from_assignment(&sps, &[0, 0, 0, 1]);
        let (_, trace) = refine(&st, &sps, &adj, &g, 1, &UniformWeighting);
        assert_eq!(trace.iterations.len(), 1);
        assert!(!trace.converged());
        let (out, trace) = refine(&st, &sps, &adj, &g, 0, &UniformWeighting);
        assert!(trace.iterations.is_empty());
        assert_eq!(out, st);
    }

    #[test]
    fn oscillation_is_halted_by_cap() {
        let sps: Vec<_> = (0..5).map(|i| sp(i, 1, i as f64)).collect();
        let pairs = [((0, 1), 0.3), ((0, 2), 0.0), ((1, 2), 0.5), ((1, 3), 0.7), ((1, 4), 0.6)];
        let adj = SuperpointAdjacency::from_pairs(5, pairs.iter().map(|&(p, _)| p));
        let g = AffinityGraph::from_affinities(5, pairs);
        let st = SegmentationState::from_assignment(&sps, &[0, 0, 0, 0, 1]);
        let (out, trace) = refine(&st, &sps, &adj, &g, 10, &UniformWeighting);
        assert_eq!(trace.iterations.len(), 10);
        assert!(!trace.converged());
        for k in 2..8 {
            assert_eq!(trace.iterations[k], trace.iterations[k + 2]);
        }
        assert!(out.is_consistent());
    }

    #[test]
    fn merge_joins_linked_regions() {
        let sps: Vec<_> = (0..4).map(|i| sp(i, 10, i as f64)).collect();
        let g = AffinityGraph::from_affinities(4, [((0, 1), 0.9), ((1, 2), 0.7), ((2, 3), 0.9)]);
        let mut a = vec![0, 0, 1, 1];
        let merges = merge_regions(&mut a, &g, &sps, 0.5, &UniformWeighting);
        assert_eq!(merges, vec![Merge { kept: 0, absorbed: 1, affinity: 0.7 }]);
        assert_eq!(a, vec![0, 0, 0, 0]);

        // strict threshold
        let mut a = vec![0, 0, 1, 1];
        assert!(merge_regions(&mut a, &g, &sps, 0.7, &UniformWeighting).is_empty());
        assert_eq!(a, vec![0, 0, 1, 1]);
    }

    #[test]
    fn merged_pools_add_up() {
        // after 0 and 1 join, their pooled link to 2 is (0.3 + 0.6) / 2
        let sps: Vec<_> = (0..3).map(|i| sp(i, 10, i as f64)).collect();
        let g = AffinityGraph::from_affinities(3, [((0, 1), 0.8), ((1, 2), 0.3), ((0, 2), 0.6)]);
        let mut a = vec![0, 1, 2];
        let merges = merge_regions(&mut a, &g, &sps, 0.5, &UniformWeighting);
        assert_eq!(merges.len(), 1);
        assert_eq!(a, vec![0, 0, 2]);

        let mut a = vec![0, 1, 2];
        let merges = merge_regions(&mut a, &g, &sps, 0.4, &UniformWeighting);
        assert_eq!(merges.iter().map(|m| (m.kept, m.absorbed)).collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
        assert!((merges[1].affinity - 0.45).abs() < 1e-12);
        assert_eq!(a, vec![0, 0, 0]);
    }

    #[test]
    fn merge_pass_can_be_disabled() {
        let sps: Vec<_> = (0..4).map(|i| sp(i, 10, i as f64)).collect();
        let adj = SuperpointAdjacency::from_pairs(4, [(0, 1), (1, 2), (2, 3)]);
        let g = AffinityGraph::from_affinities(4, [((0, 1), 0.9), ((1, 2), 0.7), ((2, 3), 0.9)]);
        let st = SegmentationState::from_assignment(&sps, &[0, 0, 1, 1]);
        let plain = refine(&st, &sps, &adj, &g, 10, &UniformWeighting);
        assert_eq!(refine_and_merge(&st, &sps, &adj, &g, 10, 0.5, false, &UniformWeighting), plain);
        let (merged, trace) = refine_and_merge(&st, &sps, &adj, &g, 10, 0.5, true, &UniformWeighting);
        assert_eq!(merged.assignment, vec![0, 0, 0, 0]);
        assert_eq!(trace.iterations, plain.1.iterations);
        assert_eq!(trace.merges.len(), 1);
    }
}
