//! Per-frame mask documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::Rle;
use crate::scalar::Scalar;
use crate::scene::{Mask2D, MaskId};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskDoc {
    frame_id: u32,
    masks: Vec<MaskEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskEntry {
    index: u32,
    score: f64,
    rle: Rle,
}

/// Masks of one frame plus the number of scores clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMasks<T: Scalar> {
    pub frame_id: u32,
    pub masks: Vec<Mask2D<T>>,
    pub clamped_scores: usize,
}

/// Parses a mask document. Syntax errors report the byte offset; scores
/// outside `[0, 1]` are clamped and counted, non-finite scores rejected.
pub fn parse_masks<T: Scalar>(bytes: &[u8], path: &Path) -> Result<FrameMasks<T>> {
    let doc: MaskDoc = serde_json::from_slice(bytes).map_err(|e| {
        let at = super::byte_offset(bytes, e.line(), e.column());
        Error::format(path, format!("invalid mask JSON at byte {at}: {e}"))
    })?;
    let mut clamped = 0;
    let mut masks = Vec::with_capacity(doc.masks.len());
    for m in doc.masks {
        if !m.score.is_finite() {
            return Err(Error::format(path, format!("mask {} has a non-finite score", m.index)));
        }
        let score = m.score.clamp(0.0, 1.0);
        if score != m.score {
            clamped += 1;
        }
        masks.push(Mask2D { id: MaskId { frame_id: doc.frame_id, index: m.index }, pixels: m.rle, score: T::lit(score) });
    }
    Ok(FrameMasks { frame_id: doc.frame_id, masks, clamped_scores: clamped })
}

pub fn encode_masks<T: Scalar>(frame_id: u32, masks: &[Mask2D<T>]) -> Vec<u8> {
    let doc = MaskDoc {
        frame_id,
        masks: masks
            .iter()
            .map(|m| MaskEntry { index: m.id.index, score: m.score.as_f64(), rle: m.pixels.clone() })
            .collect(),
    };
    serde_json::to_vec(&doc).expect("mask document serializes")
}

pub fn read_masks<T: Scalar>(path: &Path) -> Result<FrameMasks<T>> {
    parse_masks(&super::read_bytes(path)?, path)
}

pub fn write_masks<T: Scalar>(path: &Path, frame_id: u32, masks: &[Mask2D<T>]) -> Result<()> {
    super::write_bytes(path, &encode_masks(frame_id, masks))
}
