//! Per-frame label maps as 16-bit PNGs plus an index of mask ids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask_store::{MapKind, SegmentationMap2D};
use crate::scene::MaskId;

pub const INDEX: &str = "maps.json";

#[derive(Serialize, Deserialize)]
struct MapEntry {
    frame_id: u32,
    file: String,
    kind: MapKind,
    label_to_mask: Vec<MaskId>,
}

/// Writes `<frame_id>.png` per map and the index that restores label ids.
pub fn write_maps(dir: &Path, maps: &[SegmentationMap2D]) -> Result<()> {
    let mut index = Vec::with_capacity(maps.len());
    for m in maps {
        let file = format!("{:06}.png", m.frame_id);
        super::write_bytes(&dir.join(&file), &super::png16::encode_label_map(m)?)?;
        index.push(MapEntry { frame_id: m.frame_id, file, kind: m.kind, label_to_mask: m.label_to_mask.clone() });
    }
    super::write_bytes(&dir.join(INDEX), &serde_json::to_vec_pretty(&index).expect("index serializes"))
}

pub fn read_maps(dir: &Path) -> Result<Vec<SegmentationMap2D>> {
    let path = dir.join(INDEX);
    let bytes = super::read_bytes(&path)?;
    let index: Vec<MapEntry> = serde_json::from_slice(&bytes).map_err(|e| {
        let at = super::byte_offset(&bytes, e.line(), e.column());
        Error::format(&path, format!("invalid map index at byte {at}: {e}"))
    })?;
    index
        .into_iter()
        .map(|e| {
            let png = dir.join(&e.file);
            let (width, height, labels) = super::png16::decode_label_map(&super::read_bytes(&png)?, &png)?;
            if let Some(&l) = labels.iter().find(|&&l| l >= e.label_to_mask.len() as i32) {
                return Err(Error::format(&png, format!("label {l} has no mask in the index")));
            }
            Ok(SegmentationMap2D { frame_id: e.frame_id, width, height, labels, label_to_mask: e.label_to_mask, kind: e.kind })
        })
        .collect()
}
