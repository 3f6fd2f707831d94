//! Multi-view mask matching: candidate sets, coverage vectors, consistency
//! scores and the refined per-frame maps they induce.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask_store::{build_refined_map, greedy_nms, SegmentationMap2D};
use crate::projection::{FrameProjection, ProjectionTable};
use crate::region_growing::SegmentationState;
use crate::rle::Bitmap;
use crate::scalar::{sparse_cosine, Scalar};
use crate::scene::{Frame, MaskId};
use crate::superpoint::Superpoint;

/// Sparse vector over segment ids.
pub type CoverageVector<T> = Vec<(u32, T)>;

/// Point indices of each coarse segment.
pub fn segment_points<T: Scalar>(state: &SegmentationState<T>, superpoints: &[Superpoint<T>]) -> Vec<Vec<u32>> {
    state
        .regions
        .iter()
        .map(|members| {
            let mut pts: Vec<u32> =
                members.iter().flat_map(|&s| superpoints[s as usize].point_indices.iter().copied()).collect();
            pts.sort_unstable();
            pts
        })
        .collect()
}

/// Fraction of the segment's points visible in the frame.
pub fn frame_visibility<T: Scalar>(segment: &[u32], proj: &FrameProjection<T>) -> T {
    if segment.is_empty() {
        return T::zero();
    }
    let visible = segment.iter().filter(|&&p| proj.visible[p as usize]).count();
    T::from_count(visible) / T::from_count(segment.len())
}

fn inside_stats<T: Scalar>(segment: &[u32], proj: &FrameProjection<T>, mask: &Bitmap) -> (usize, usize, T) {
    let mut visible = 0;
    let mut inside = 0;
    let mut weight = T::zero();
    for &p in segment {
        if let Some((x, y)) = proj.visible_pixel(p as usize) {
            visible += 1;
            if x < mask.width && y < mask.height && mask.get(x, y) {
                inside += 1;
                weight += proj.weight[p as usize];
            }
        }
    }
    (visible, inside, weight)
}

/// Fraction of the segment's visible points that fall inside the mask;
/// `None` when nothing is visible.
pub fn mask_visibility<T: Scalar>(segment: &[u32], proj: &FrameProjection<T>, mask: &Bitmap) -> Option<T> {
    let (visible, inside, _) = inside_stats(segment, proj, mask);
    (visible > 0).then(|| T::from_count(inside) / T::from_count(visible))
}

/// Mean depth weight of the segment's visible points inside the mask.
pub fn segment_mask_depth_weight<T: Scalar>(segment: &[u32], proj: &FrameProjection<T>, mask: &Bitmap) -> Option<T> {
    let (_, inside, weight) = inside_stats(segment, proj, mask);
    (inside > 0).then(|| weight / T::from_count(inside))
}

/// Eligibility test with strict thresholds on both ratios.
pub fn is_candidate<T: Scalar>(frame_vis: T, mask_vis: T, tau_f: T, tau_m: T) -> bool {
    frame_vis > tau_f && mask_vis > tau_m
}

/// Coverage of one mask over all segments: depth weight times mask visibility,
/// listed for segments with at least one visible point inside the mask.
pub fn coverage_vector<T: Scalar>(mask: &Bitmap, segments: &[Vec<u32>], proj: &FrameProjection<T>) -> CoverageVector<T> {
    segments
        .iter()
        .enumerate()
        .filter_map(|(k, seg)| {
            let (visible, inside, weight) = inside_stats(seg, proj, mask);
            (inside > 0).then(|| (k as u32, coverage_entry(visible, inside, weight)))
        })
        .collect()
}

fn coverage_entry<T: Scalar>(visible: usize, inside: usize, weight_sum: T) -> T {
    let depth = weight_sum / T::from_count(inside);
    let vis = T::from_count(inside) / T::from_count(visible);
    (depth * vis).min(T::one()).max(T::zero())
}

/// Mean cosine of each vector to the others; a lone vector scores 1.
pub fn consistency_scores<T: Scalar>(vectors: &[&[(u32, T)]]) -> Vec<T> {
    let n = vectors.len();
    if n == 1 {
        return vec![T::one()];
    }
    let mut cos = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = sparse_cosine(vectors[i], vectors[j]).unwrap_or_else(T::zero);
            cos[i * n + j] = c;
            cos[j * n + i] = c;
        }
    }
    (0..n)
        .map(|i| {
            let s: T = (0..n).filter(|&j| j != i).map(|j| cos[i * n + j]).sum();
            s / T::from_count(n - 1)
        })
        .collect()
}

/// Mean of each mask's scores across the candidate sets containing it.
pub fn final_mask_scores<T: Scalar>(set_scores: &[Vec<(MaskId, T)>]) -> BTreeMap<MaskId, T> {
    let mut acc: BTreeMap<MaskId, (T, usize)> = BTreeMap::new();
    for set in set_scores {
        for &(id, s) in set {
            let e = acc.entry(id).or_insert((T::zero(), 0));
            e.0 += s;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(id, (s, n))| (id, s / T::from_count(n))).collect()
}

/// Per-frame statistics of every segment against every mask of that frame.
#[derive(Debug, Clone)]
struct FrameStats<T> {
    frame_id: u32,
    /// visible point count per segment
    visible: Vec<usize>,
    /// per mask position: segment -> (inside count, weight sum)
    inside: Vec<BTreeMap<u32, (usize, T)>>,
}

fn frame_stats<T: Scalar>(
    segment_of: &[i32],
    n_segments: usize,
    proj: &FrameProjection<T>,
    frame: &Frame<T>,
) -> Result<FrameStats<T>> {
    let bitmaps = frame.masks.iter().map(|m| m.pixels.decode()).collect::<Result<Vec<_>>>()?;
    let mut visible = vec![0usize; n_segments];
    let mut inside = vec![BTreeMap::new(); bitmaps.len()];
    for (p, &seg) in segment_of.iter().enumerate() {
        if seg < 0 {
            continue;
        }
        let Some((x, y)) = proj.visible_pixel(p) else { continue };
        visible[seg as usize] += 1;
        for (j, bm) in bitmaps.iter().enumerate() {
            if x < bm.width && y < bm.height && bm.get(x, y) {
                let e = inside[j].entry(seg as u32).or_insert((0usize, T::zero()));
                e.0 += 1;
                e.1 += proj.weight[p];
            }
        }
    }
    Ok(FrameStats { frame_id: frame.frame_id, visible, inside })
}

/// One member of a candidate set with the ratios that admitted it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Candidate<T: Scalar> {
    pub mask: MaskId,
    pub frame_visibility: T,
    pub mask_visibility: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingResult<T: Scalar> {
    /// Candidate set per segment, ordered by (frame id, mask index).
    pub candidate_sets: Vec<Vec<Candidate<T>>>,
    /// Coverage vector of every mask that is a candidate somewhere.
    pub coverage: BTreeMap<MaskId, CoverageVector<T>>,
    /// Consistency score of each member within each set.
    pub set_scores: Vec<Vec<(MaskId, T)>>,
    pub final_scores: BTreeMap<MaskId, T>,
}

#[derive(Serialize)]
#[serde(bound = "")]
struct SegmentReport<'a, T: Scalar> {
    segment: usize,
    candidates: &'a [Candidate<T>],
    scores: Vec<(u32, u32, T)>,
}

#[derive(Serialize)]
#[serde(bound = "")]
struct MaskReport<'a, T: Scalar> {
    frame_id: u32,
    index: u32,
    coverage: &'a [(u32, T)],
    final_score: Option<T>,
}

impl<T: Scalar> MatchingResult<T> {
    /// JSON document listing candidate sets, coverage vectors and scores.
    pub fn report_json(&self) -> serde_json::Value {
        let segments: Vec<SegmentReport<T>> = self
            .candidate_sets
            .iter()
            .zip(&self.set_scores)
            .enumerate()
            .map(|(segment, (c, s))| SegmentReport {
                segment,
                candidates: c,
                scores: s.iter().map(|(id, v)| (id.frame_id, id.index, *v)).collect(),
            })
            .collect();
        let masks: Vec<MaskReport<T>> = self
            .coverage
            .iter()
            .map(|(id, cov)| MaskReport {
                frame_id: id.frame_id,
                index: id.index,
                coverage: cov,
                final_score: self.final_scores.get(id).copied(),
            })
            .collect();
        serde_json::json!({ "segments": segments, "masks": masks })
    }
}

/// Runs matching for all segments against every mask of every frame.
pub fn match_masks<T: Scalar>(
    segments: &[Vec<u32>],
    frames: &[Frame<T>],
    table: &ProjectionTable<T>,
    tau_f: T,
    tau_m: T,
) -> Result<MatchingResult<T>> {
    for (name, v) in [("tau_f", tau_f), ("tau_m", tau_m)] {
        if !(v > T::zero() && v < T::one()) {
            return Err(Error::InvalidParameter(format!("{name} must lie in (0,1), got {v}")));
        }
    }
    let n_points = table.frames.first().map_or(0, |f| f.len());
    let mut segment_of = vec![-1i32; n_points];
    for (k, seg) in segments.iter().enumerate() {
        for &p in seg {
            let slot = segment_of
                .get_mut(p as usize)
                .ok_or_else(|| Error::DimensionMismatch(format!("segment point {p} outside cloud of {n_points}")))?;
            *slot = k as i32;
        }
    }
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| frames[i].frame_id);
    let projections: BTreeMap<u32, &FrameProjection<T>> = table.frames.iter().map(|f| (f.frame_id, f)).collect();
    let stats = order
        .par_iter()
        .map(|&i| {
            let frame = &frames[i];
            let proj = projections
                .get(&frame.frame_id)
                .ok_or_else(|| Error::DimensionMismatch(format!("no projection for frame {}", frame.frame_id)))?;
            frame_stats(&segment_of, segments.len(), proj, frame)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut candidate_sets: Vec<Vec<Candidate<T>>> = vec![Vec::new(); segments.len()];
    let mut coverage = BTreeMap::new();
    for (fs, &fi) in stats.iter().zip(&order) {
        let frame = &frames[fi];
        for (j, inside) in fs.inside.iter().enumerate() {
            let id = frame.masks[j].id;
            let mut is_member = false;
            for (&k, &(count, _)) in inside {
                let k = k as usize;
                let vf = T::from_count(fs.visible[k]) / T::from_count(segments[k].len());
                let vm = T::from_count(count) / T::from_count(fs.visible[k]);
                if is_candidate(vf, vm, tau_f, tau_m) {
                    candidate_sets[k].push(Candidate { mask: id, frame_visibility: vf, mask_visibility: vm });
                    is_member = true;
                }
            }
            if is_member {
                let cov: CoverageVector<T> =
                    inside.iter().map(|(&k, &(count, w))| (k, coverage_entry(fs.visible[k as usize], count, w))).collect();
                coverage.insert(id, cov);
            }
        }
        debug_assert_eq!(fs.frame_id, frame.frame_id);
    }

    let set_scores: Vec<Vec<(MaskId, T)>> = candidate_sets
        .par_iter()
        .map(|set| {
            if set.is_empty() {
                return Vec::new();
            }
            let vecs: Vec<&[(u32, T)]> = set.iter().map(|c| coverage[&c.mask].as_slice()).collect();
            set.iter().map(|c| c.mask).zip(consistency_scores(&vecs)).collect()
        })
        .collect();
    let final_scores = final_mask_scores(&set_scores);
    Ok(MatchingResult { candidate_sets, coverage, set_scores, final_scores })
}

/// Consistency-ordered NMS per frame followed by flattening into refined
/// maps. Masks without a final score are left out.
pub fn consistency_nms_and_refine_maps<T: Scalar>(
    frames: &[Frame<T>],
    final_scores: &BTreeMap<MaskId, T>,
    nms_iou: T,
) -> Result<Vec<SegmentationMap2D>> {
    frames
        .par_iter()
        .map(|frame| {
            let scored: Vec<_> = frame
                .masks
                .iter()
                .filter_map(|m| final_scores.get(&m.id).map(|&s| (m, s)))
                .collect();
            let bitmaps = scored.iter().map(|(m, _)| m.pixels.decode()).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Bitmap> = bitmaps.iter().collect();
            let scores: Vec<T> = scored.iter().map(|&(_, s)| s).collect();
            let indices: Vec<u32> = scored.iter().map(|(m, _)| m.id.index).collect();
            let mut keep = greedy_nms(&refs, &scores, &indices, nms_iou)?;
            keep.sort_unstable();
            let masks: Vec<_> = keep.iter().map(|&i| scored[i].0).collect();
            let kept_scores: Vec<T> = keep.iter().map(|&i| scores[i]).collect();
            build_refined_map(frame.frame_id, frame.intrinsics.width, frame.intrinsics.height, &masks, &kept_scores)
        })
        .collect()
}
