//! Scene directory layout:
//!
//! ```text
//! cloud.ply              binary little-endian PLY
//! config.json            optional pipeline config
//! intrinsics.txt         optional, shared by frames without their own file
//! intrinsics/<id>.txt    fx fy cx cy width height
//! pose/<id>.txt          4x4 row-major matrix, one file per frame
//! depth/<id>.png         16-bit millimetres
//! masks/<id>.json        optional; a missing file means no masks
//! gt.txt                 optional ground-truth instance per point
//! ```
//!
//! Frames are the numeric stems under `pose/`, in ascending order.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scene::{Frame, PipelineConfig, SceneBundle};

use super::text::PoseConvention;

pub const CLOUD: &str = "cloud.ply";
pub const CONFIG: &str = "config.json";
pub const GT: &str = "gt.txt";

fn frame_file(dir: &Path, sub: &str, id: u32, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("{id:06}.{ext}"))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub poses: PoseConvention,
}

#[derive(Debug, Clone)]
pub struct LoadedScene<T: Scalar> {
    pub bundle: SceneBundle<T>,
    /// Non-fatal notes, e.g. clamped mask scores.
    pub warnings: Vec<String>,
}

/// Writes every file of the layout except `gt.txt`.
pub fn write_bundle<T: Scalar>(dir: &Path, bundle: &SceneBundle<T>) -> Result<()> {
    super::ply::write_ply(&dir.join(CLOUD), &bundle.cloud)?;
    write_config(&dir.join(CONFIG), &bundle.config)?;
    for f in &bundle.frames {
        let id = f.frame_id;
        super::write_bytes(&frame_file(dir, "intrinsics", id, "txt"), super::text::format_intrinsics(&f.intrinsics).as_bytes())?;
        super::write_bytes(&frame_file(dir, "pose", id, "txt"), super::text::format_pose(&f.pose).as_bytes())?;
        super::png16::write_depth(&frame_file(dir, "depth", id, "png"), &f.depth)?;
        super::masks::write_masks(&frame_file(dir, "masks", id, "json"), id, &f.masks)?;
    }
    Ok(())
}

pub fn write_config<T: Scalar>(path: &Path, config: &PipelineConfig<T>) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(config).expect("config serializes");
    json.push(b'\n');
    super::write_bytes(path, &json)
}

/// Parses a config document; missing keys take their defaults, unknown keys
/// are errors.
pub fn read_config<T: Scalar>(path: &Path) -> Result<PipelineConfig<T>> {
    let bytes = super::read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        let at = super::byte_offset(&bytes, e.line(), e.column());
        Error::format(path, format!("invalid config at byte {at}: {e}"))
    })
}

/// Numeric frame ids of the files in `dir/pose`, ascending.
pub fn frame_ids(dir: &Path) -> Result<Vec<u32>> {
    let pose_dir = dir.join("pose");
    let entries = std::fs::read_dir(&pose_dir).map_err(|e| Error::io(&pose_dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&pose_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let id = stem.parse::<u32>().map_err(|_| Error::format(&path, "pose file name is not a frame id"))?;
        ids.push(id);
    }
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::format(&pose_dir, format!("frame id {} appears twice", w[0])));
    }
    Ok(ids)
}

/// Finds a frame file whatever the zero padding of its name.
fn find_frame_file(dir: &Path, sub: &str, id: u32, ext: &str) -> Option<PathBuf> {
    let padded = frame_file(dir, sub, id, ext);
    if padded.exists() {
        return Some(padded);
    }
    let entries = std::fs::read_dir(dir.join(sub)).ok()?;
    entries.filter_map(|e| e.ok().map(|e| e.path())).find(|p| {
        p.extension().and_then(|e| e.to_str()) == Some(ext)
            && p.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u32>().ok()) == Some(id)
    })
}

pub fn read_bundle<T: Scalar>(dir: &Path, options: ReadOptions) -> Result<LoadedScene<T>> {
    let cloud = super::ply::read_ply(&dir.join(CLOUD))?;
    let config_path = dir.join(CONFIG);
    let config = if config_path.exists() { read_config(&config_path)? } else { PipelineConfig::default() };
    let shared = dir.join("intrinsics.txt");
    let mut warnings = Vec::new();
    let mut frames = Vec::new();
    for id in frame_ids(dir)? {
        let pose_path = find_frame_file(dir, "pose", id, "txt").expect("listed pose file exists");
        let pose = super::text::read_pose(&pose_path, options.poses)?;
        let intrinsics = match find_frame_file(dir, "intrinsics", id, "txt") {
            Some(p) => super::text::read_intrinsics(&p)?,
            None if shared.exists() => super::text::read_intrinsics(&shared)?,
            None => return Err(Error::format(dir, format!("no intrinsics for frame {id}"))),
        };
        let depth_path = find_frame_file(dir, "depth", id, "png")
            .ok_or_else(|| Error::format(dir, format!("no depth image for frame {id}")))?;
        let depth = super::png16::read_depth(&depth_path)?;
        let masks = match find_frame_file(dir, "masks", id, "json") {
            Some(p) => {
                let m = super::masks::read_masks(&p)?;
                if m.frame_id != id {
                    return Err(Error::format(&p, format!("document frame_id {} in the file of frame {id}", m.frame_id)));
                }
                if m.clamped_scores > 0 {
                    warnings.push(format!("{}: {} score(s) clamped into [0,1]", p.display(), m.clamped_scores));
                }
                m.masks
            }
            None => Vec::new(),
        };
        frames.push(Frame { frame_id: id, intrinsics, pose, depth, masks });
    }
    Ok(LoadedScene { bundle: SceneBundle { cloud, frames, config }, warnings })
}

/// Every regular file under `dir`, as sorted relative paths.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, at: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(at).map_err(|e| Error::io(at, e))? {
            let path = entry.map_err(|e| Error::io(at, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
