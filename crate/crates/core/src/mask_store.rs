//! Per-frame mask handling: IoU, greedy non-maximum suppression and the
//! flattening of surviving masks into a single label image.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::Bitmap;
use crate::scalar::Scalar;
use crate::scene::{Mask2D, MaskId};

pub const BACKGROUND: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Coarse,
    Refined,
}

/// Pixel -> mask label image for one frame. Label `l >= 0` refers to
/// `label_to_mask[l]`; [`BACKGROUND`] marks uncovered pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationMap2D {
    pub frame_id: u32,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<i32>,
    pub label_to_mask: Vec<MaskId>,
    pub kind: MapKind,
}

impl SegmentationMap2D {
    pub fn background(frame_id: u32, width: u32, height: u32, kind: MapKind) -> Self {
        Self {
            frame_id,
            width,
            height,
            labels: vec![BACKGROUND; width as usize * height as usize],
            label_to_mask: Vec::new(),
            kind,
        }
    }

    #[inline]
    pub fn label(&self, x: u32, y: u32) -> i32 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn covered_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l != BACKGROUND).count()
    }
}

pub fn bitmap_iou<T: Scalar>(a: &Bitmap, b: &Bitmap) -> Result<T> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "masks are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let union = a.union_count(b);
    if union == 0 {
        return Ok(T::zero());
    }
    Ok(T::from_count(a.intersection_count(b)) / T::from_count(union))
}

pub fn mask_iou<T: Scalar>(a: &Mask2D<T>, b: &Mask2D<T>) -> Result<T> {
    if a.pixels.size != b.pixels.size {
        return Err(Error::DimensionMismatch(format!(
            "mask sizes {:?} and {:?} differ",
            a.pixels.size, b.pixels.size
        )));
    }
    bitmap_iou(&a.pixels.decode()?, &b.pixels.decode()?)
}

/// Order used by both NMS and flattening: score descending, then mask index
/// ascending.
fn priority_order<T: Scalar>(scores: &[T], indices: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(indices[a].cmp(&indices[b]))
    });
    order
}

/// Greedy suppression over an abstract pairwise IoU: visits candidates by
/// score descending (index ascending on ties) and keeps one iff its IoU with
/// every kept candidate is `<= iou_threshold`. Returns positions in kept order.
pub fn greedy_select<T: Scalar>(
    scores: &[T],
    indices: &[u32],
    iou_threshold: T,
    mut iou: impl FnMut(usize, usize) -> Result<T>,
) -> Result<Vec<usize>> {
    let mut kept: Vec<usize> = Vec::new();
    for cand in priority_order(scores, indices) {
        let mut keep = true;
        for &k in &kept {
            if iou(cand, k)? > iou_threshold {
                keep = false;
                break;
            }
        }
        if keep {
            kept.push(cand);
        }
    }
    Ok(kept)
}

/// Greedy NMS over decoded masks.
pub fn greedy_nms<T: Scalar>(bitmaps: &[&Bitmap], scores: &[T], indices: &[u32], iou_threshold: T) -> Result<Vec<usize>> {
    greedy_select(scores, indices, iou_threshold, |a, b| bitmap_iou(bitmaps[a], bitmaps[b]))
}

/// Score-ordered NMS over one frame's masks.
pub fn nms_by_score<'a, T: Scalar>(masks: &'a [Mask2D<T>], iou_threshold: T) -> Result<Vec<&'a Mask2D<T>>> {
    let decoded = masks.iter().map(|m| m.pixels.decode()).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Bitmap> = decoded.iter().collect();
    let scores: Vec<T> = masks.iter().map(|m| m.score).collect();
    let indices: Vec<u32> = masks.iter().map(|m| m.id.index).collect();
    Ok(greedy_nms(&refs, &scores, &indices, iou_threshold)?.into_iter().map(|i| &masks[i]).collect())
}

/// Flattens masks into a label image: each pixel takes the label of the
/// highest-priority covering mask. Labels follow input order.
pub fn flatten(
    frame_id: u32,
    width: u32,
    height: u32,
    bitmaps: &[&Bitmap],
    ids: &[MaskId],
    priority: &[impl Scalar],
    kind: MapKind,
) -> SegmentationMap2D {
    let mut map = SegmentationMap2D::background(frame_id, width, height, kind);
    map.label_to_mask = ids.to_vec();
    let indices: Vec<u32> = ids.iter().map(|id| id.index).collect();
    for pos in priority_order(priority, &indices) {
        let bm = bitmaps[pos];
        for (x, y) in bm.pixels() {
            if x >= width || y >= height {
                continue;
            }
            let cell = &mut map.labels[(y * width + x) as usize];
            if *cell == BACKGROUND {
                *cell = pos as i32;
            }
        }
    }
    map
}

/// Coarse map from masks that survived score NMS, prioritized by segmenter score.
pub fn build_coarse_map<T: Scalar>(frame_id: u32, width: u32, height: u32, survivors: &[&Mask2D<T>]) -> Result<SegmentationMap2D> {
    let decoded = survivors.iter().map(|m| m.pixels.decode()).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Bitmap> = decoded.iter().collect();
    let ids: Vec<MaskId> = survivors.iter().map(|m| m.id).collect();
    let scores: Vec<T> = survivors.iter().map(|m| m.score).collect();
    Ok(flatten(frame_id, width, height, &refs, &ids, &scores, MapKind::Coarse))
}

/// Refined map: identical flattening rule, prioritized by consistency score.
pub fn build_refined_map<T: Scalar>(
    frame_id: u32,
    width: u32,
    height: u32,
    masks: &[&Mask2D<T>],
    consistency: &[T],
) -> Result<SegmentationMap2D> {
    let decoded = masks.iter().map(|m| m.pixels.decode()).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Bitmap> = decoded.iter().collect();
    let ids: Vec<MaskId> = masks.iter().map(|m| m.id).collect();
    Ok(flatten(frame_id, width, height, &refs, &ids, consistency, MapKind::Refined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(index: u32, score: f64, w: u32, h: u32, f: impl Fn(u32, u32) -> bool) -> Mask2D<f64> {
        Mask2D { id: MaskId { frame_id: 0, index }, pixels: Bitmap::from_fn(w, h, f).encode(), score }
    }

    #[test]
    fn iou_cases() {
        let a = mask(0, 0.9, 4, 4, |x, y| x < 2 && y < 2);
        let b = mask(1, 0.9, 4, 4, |x, y| x < 2 && y < 2);
        let c = mask(2, 0.9, 4, 4, |x, y| x >= 2 && y >= 2);
        let d = mask(3, 0.9, 4, 4, |x, y| (1..3).contains(&x) && y < 2);
        assert_eq!(mask_iou(&a, &b).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &c).unwrap(), 0.0);
        assert!((mask_iou(&a, &d).unwrap() - 2.0 / 6.0).abs() < 1e-12);
        let e = mask(4, 0.9, 5, 4, |_, _| true);
        assert!(matches!(mask_iou(&a, &e), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn nms_cases() {
        let a = mask(0, 0.9, 4, 4, |x, _| x < 2);
        let b = mask(1, 0.8, 4, 4, |x, _| x < 2);
        let both = [b.clone(), a.clone()];
        let kept = nms_by_score(&both, 0.5).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id.index, 0);

        let c = mask(2, 0.7, 4, 4, |x, _| x >= 2);
        assert_eq!(nms_by_score(&[a.clone(), c.clone()], 0.5).unwrap().len(), 2);
    }

    #[test]
    fn nms_three_mask_trace() {
        // A(0.9), B(0.8), C(0.7) with IoU(A,B)=0.6, IoU(A,C)=0.2, IoU(B,C)=0.7
        let iou = [[1.0, 0.6, 0.2], [0.6, 1.0, 0.7], [0.2, 0.7, 1.0]];
        let kept = greedy_select(&[0.9, 0.8, 0.7], &[0, 1, 2], 0.5, |a, b| Ok(iou[a][b])).unwrap();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn nms_trace_on_realizable_masks() {
        let w = 20;
        let a = mask(0, 0.9, w, 1, |x, _| x < 10);
        let b = mask(1, 0.8, w, 1, |x, _| (2..14).contains(&x)); // IoU(A,B) = 8/14
        let c = mask(2, 0.7, w, 1, |x, _| (8..18).contains(&x)); // IoU(A,C) = 2/18, IoU(B,C) = 6/16
        let kept: Vec<u32> = nms_by_score(&[c.clone(), b.clone(), a.clone()], 0.5).unwrap().iter().map(|m| m.id.index).collect();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn raising_threshold_can_suppress_a_survivor() {
        let y = mask(0, 0.9, 20, 1, |x, _| x < 10);
        let x = mask(1, 0.8, 20, 1, |x, _| (5..15).contains(&x));
        let c = mask(2, 0.7, 20, 1, |x, _| (6..15).contains(&x));
        let all = [y, x, c];
        let ids = |t: f64| nms_by_score(&all, t).unwrap().iter().map(|m| m.id.index).collect::<Vec<_>>();
        assert_eq!(ids(0.3), vec![0, 2]);
        assert_eq!(ids(0.5), vec![0, 1]);
    }

    #[test]
    fn coarse_map_cases() {
        let left = mask(0, 0.9, 4, 2, |x, _| x < 2);
        let map = build_coarse_map(0, 4, 2, &[&left]).unwrap();
        assert_eq!(map.labels, vec![0, 0, -1, -1, 0, 0, -1, -1]);

        let lo = mask(0, 0.8, 4, 1, |x, _| x < 3);
        let hi = mask(1, 0.9, 4, 1, |x, _| x >= 1);
        let map = build_coarse_map(0, 4, 1, &[&lo, &hi]).unwrap();
        assert_eq!(map.labels, vec![0, 1, 1, 1]);
        assert_eq!(map.label_to_mask[1].index, 1);

        let empty = build_coarse_map::<f64>(0, 3, 3, &[]).unwrap();
        assert_eq!(empty.covered_pixels(), 0);
    }

    #[test]
    fn refined_map_uses_consistency_order() {
        let fragment = mask(0, 0.95, 4, 1, |x, _| x < 2);
        let whole = mask(1, 0.9, 4, 1, |_, _| true);
        let map = build_refined_map(0, 4, 1, &[&fragment, &whole], &[0.3, 0.9]).unwrap();
        assert_eq!(map.labels, vec![1, 1, 1, 1]);
        assert_eq!(map.kind, MapKind::Refined);
        assert_eq!(build_refined_map::<f64>(0, 2, 2, &[], &[]).unwrap().covered_pixels(), 0);
    }

    fn random_masks(seed: u64, n: usize) -> Vec<Mask2D<f64>> {
        (0..n)
            .map(|i| {
                let s = seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64 * 1442695040888963407);
                let x0 = (s >> 7) % 6;
                let y0 = (s >> 13) % 6;
                let w = 1 + (s >> 19) % 5;
                let h = 1 + (s >> 23) % 5;
                let score = ((s >> 29) % 7) as f64 / 7.0;
                mask(i as u32, score, 10, 10, move |x, y| {
                    (x as u64) >= x0 && (x as u64) < x0 + w && (y as u64) >= y0 && (y as u64) < y0 + h
                })
            })
            .collect()
    }

    proptest! {
        #[test]
        fn nms_idempotent_and_keeps_isolated(seed in any::<u64>(), n in 1usize..8, t1 in 0.05f64..0.95) {
            let masks = random_masks(seed, n);
            let once: Vec<Mask2D<f64>> = nms_by_score(&masks, t1).unwrap().into_iter().cloned().collect();
            let twice: Vec<Mask2D<f64>> = nms_by_score(&once, t1).unwrap().into_iter().cloned().collect();
            prop_assert_eq!(&once, &twice);

            // a mask below the threshold against every higher-priority mask survives
            let kept: Vec<u32> = once.iter().map(|m| m.id.index).collect();
            let mut order: Vec<&Mask2D<f64>> = masks.iter().collect();
            order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.id.index.cmp(&b.id.index)));
            for (i, m) in order.iter().enumerate() {
                if order[..i].iter().all(|h| mask_iou(h, m).unwrap() <= t1) {
                    prop_assert!(kept.contains(&m.id.index));
                }
            }
        }

        #[test]
        fn flattened_pixels_trace_to_one_covering_mask(seed in any::<u64>(), n in 0usize..8) {
            let masks = random_masks(seed, n);
            let refs: Vec<&Mask2D<f64>> = masks.iter().collect();
            let map = build_coarse_map(0, 10, 10, &refs).unwrap();
            for y in 0..10 {
                for x in 0..10 {
                    let l = map.label(x, y);
                    let covering: Vec<&Mask2D<f64>> = masks.iter().filter(|m| m.pixels.decode().unwrap().get(x, y)).collect();
                    if l == BACKGROUND {
                        prop_assert!(covering.is_empty());
                    } else {
                        let owner = &masks[l as usize];
                        prop_assert!(owner.pixels.decode().unwrap().get(x, y));
                        for m in covering {
                            prop_assert!(m.score < owner.score || (m.score == owner.score && m.id.index >= owner.id.index));
                        }
                    }
                }
            }
        }
    }
}
