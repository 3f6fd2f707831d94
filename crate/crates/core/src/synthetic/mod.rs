//! Seeded synthetic scenes with ground truth and controlled corruption of
//! the per-frame masks.

mod render;
mod sample;
pub mod suites;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::Bitmap;
use crate::scalar::{Scalar, Vec3};
use crate::scene::{CameraIntrinsics, CameraPose, Frame, Mask2D, MaskId, PipelineConfig, PointCloud, SceneBundle};

pub const WHOLE_SCORE: f64 = 0.9;
pub const FRAGMENT_SCORE: f64 = 0.95;
pub const MERGE_SCORE: f64 = 0.93;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "")]
pub enum Primitive<T: Scalar> {
    /// Box without its bottom face; `center` is the volume centre and `yaw`
    /// the rotation about +z in radians.
    Box { center: Vec3<T>, size: Vec3<T>, yaw: T },
    /// Side surface and top cap.
    Cylinder { center: Vec3<T>, radius: T, height: T },
    /// Parallelogram `center + s u + t v` for s, t in [-1, 1].
    Plane { center: Vec3<T>, u: Vec3<T>, v: Vec3<T> },
}

/// Cameras evenly spaced on a horizontal circle, all looking at `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CameraRing<T: Scalar> {
    pub count: usize,
    pub radius: T,
    pub height: T,
    pub target: Vec3<T>,
    #[serde(default)]
    pub phase_deg: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ImageSpec<T: Scalar> {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "")]
pub struct CorruptionSpec<T: Scalar> {
    pub fragment_prob: T,
    pub fragment_axis_splits: usize,
    pub merge_prob: T,
    pub drop_prob: T,
    /// Keep the whole mask next to its fragments.
    pub keep_whole: bool,
    pub fragment_mode: FragmentMode,
    /// Per-instance difficulty in `[0, 1]`. Each instance is seeded as easy
    /// or hard and its fragment probability moves down or up by this share
    /// of the room left, so the mean rate stays `fragment_prob`.
    pub instance_bias: T,
}

/// How a fragmented mask is cut.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentMode {
    /// Equal bands across the longer side of the pixel bounding box.
    #[default]
    ImageAxis,
    /// Surfaces facing into a fixed per-instance half-space versus the
    /// rest, like one side of a cabinet segmented apart. The cut sits at
    /// the same 3D place in every view.
    Facing,
}

impl<T: Scalar> Default for CorruptionSpec<T> {
    fn default() -> Self {
        Self {
            fragment_prob: T::zero(),
            fragment_axis_splits: 2,
            merge_prob: T::zero(),
            drop_prob: T::zero(),
            keep_whole: true,
            fragment_mode: FragmentMode::ImageAxis,
            instance_bias: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SceneSpec<T: Scalar> {
    pub primitives: Vec<Primitive<T>>,
    /// Surface samples per square metre.
    pub density: T,
    pub cameras: CameraRing<T>,
    pub image: ImageSpec<T>,
    #[serde(default)]
    pub corruption: CorruptionSpec<T>,
    #[serde(default)]
    pub seed: u64,
    /// Drop surface samples no scanner viewpoint can see, as a real scan
    /// would never contain them.
    #[serde(default = "yes")]
    pub cull_hidden: bool,
    #[serde(default)]
    pub config: PipelineConfig<T>,
}

fn yes() -> bool {
    true
}

/// Where a generated mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskOrigin {
    Whole { instance: u32 },
    Fragment { instance: u32, piece: u32 },
    Merge { a: u32, b: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionLog {
    pub perfect_masks: usize,
    pub fragmented: usize,
    pub merged: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Instance id per point.
    pub point_instance: Vec<i32>,
    /// Per frame, row-major instance id of the surface seen at each pixel, -1 for none.
    pub frame_labels: Vec<Vec<i32>>,
    /// Per frame, origin of each mask in bundle order.
    pub mask_origins: Vec<Vec<MaskOrigin>>,
    pub log: CorruptionLog,
    /// Per frame, `(pixel, point)` pairs where the rendered depth is exactly
    /// that point's projected depth.
    #[serde(skip)]
    pub exact_pixels: Vec<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub masks_per_frame: Vec<usize>,
    pub perfect_masks: usize,
    pub fragmented: usize,
    pub fragment_masks: usize,
    pub merged: usize,
    pub dropped: usize,
    /// Fraction of perfect masks that were split.
    pub fragmentation_rate: f64,
}

const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [128, 128, 0],
];

/// Stable colour for a label; `-1` is grey.
pub fn label_color(label: i32) -> [u8; 3] {
    if label < 0 {
        [128, 128, 128]
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

fn check_prob<T: Scalar>(name: &str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidScene(format!("{name} must lie in [0,1], got {p}")))
    }
}

fn check_spec<T: Scalar>(spec: &SceneSpec<T>) -> Result<()> {
    if spec.primitives.is_empty() {
        return Err(Error::InvalidScene("at least one primitive required".into()));
    }
    if spec.cameras.count == 0 {
        return Err(Error::InvalidScene("at least one camera required".into()));
    }
    if !(spec.density > T::zero()) {
        return Err(Error::InvalidScene("density must be positive".into()));
    }
    if spec.image.width == 0 || spec.image.height == 0 {
        return Err(Error::InvalidScene("image must be non-empty".into()));
    }
    if !(spec.image.hfov_deg > T::zero() && spec.image.hfov_deg < T::lit(180.0)) {
        return Err(Error::InvalidScene("hfov_deg must lie in (0,180)".into()));
    }
    let c = &spec.corruption;
    check_prob("fragment_prob", c.fragment_prob)?;
    check_prob("merge_prob", c.merge_prob)?;
    check_prob("drop_prob", c.drop_prob)?;
    check_prob("instance_bias", c.instance_bias)?;
    if c.fragment_axis_splits < 2 {
        return Err(Error::InvalidScene("fragment_axis_splits must be at least 2".into()));
    }
    Ok(())
}

/// Viewpoints used to decide which surface samples a scan would contain:
/// 24 azimuths at three heights around the camera ring's target.
pub fn scanner_positions<T: Scalar>(ring: &CameraRing<T>) -> Vec<Vec3<T>> {
    let tau = std::f64::consts::TAU;
    let heights = [ring.target[2] + T::lit(0.5), ring.height, ring.height + T::one()];
    let mut out = Vec::new();
    for h in heights {
        for i in 0..24 {
            let az = T::lit(tau * i as f64 / 24.0);
            out.push([ring.target[0] + ring.radius * az.cos(), ring.target[1] + ring.radius * az.sin(), h]);
        }
    }
    out
}

fn seen_by_any<T: Scalar>(p: &Vec3<T>, scanners: &[Vec3<T>], prims: &[Primitive<T>]) -> bool {
    scanners.iter().any(|s| prims.iter().all(|prim| !sample::blocks(prim, s, p)))
}

/// Camera poses of the ring, in frame order.
pub fn ring_poses<T: Scalar>(ring: &CameraRing<T>) -> Result<Vec<CameraPose<T>>> {
    let tau = T::lit(std::f64::consts::TAU);
    (0..ring.count)
        .map(|i| {
            let az = ring.phase_deg.to_radians() + tau * T::from_count(i) / T::from_count(ring.count);
            let eye = [ring.target[0] + ring.radius * az.cos(), ring.target[1] + ring.radius * az.sin(), ring.height];
            CameraPose::look_at(eye, ring.target, [T::zero(), T::zero(), T::one()])
        })
        .collect()
}

/// Fragment probability of one instance under `instance_bias`.
pub fn instance_fragment_prob<T: Scalar>(spec: &CorruptionSpec<T>, seed: u64, instance: u32) -> f64 {
    let p = spec.fragment_prob.as_f64();
    let bias = spec.instance_bias.as_f64();
    if bias == 0.0 {
        return p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5_0000_0000 ^ instance as u64);
    let room = p.min(1.0 - p);
    if rng.random_bool(0.5) { p + bias * room } else { p - bias * room }
}

fn frame_rng(seed: u64, frame_id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(frame_id as u64 + 1))
}

/// Number of 4-neighbour pixel contacts between two masks.
fn contact(a: &Bitmap, b: &Bitmap) -> usize {
    let mut n = 0;
    for (x, y) in a.pixels() {
        let near = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1), (x, y)];
        n += near.iter().filter(|&&(nx, ny)| nx < b.width && ny < b.height && b.get(nx, ny)).count();
    }
    n
}

/// Splits a mask into equal bands along the longer side of its bounding box.
pub fn split_mask(mask: &Bitmap, pieces: usize) -> Vec<Bitmap> {
    let Some((x0, y0, x1, y1)) = mask.bbox() else { return Vec::new() };
    let along_x = x1 - x0 >= y1 - y0;
    let (lo, len) = if along_x { (x0, x1 - x0 + 1) } else { (y0, y1 - y0 + 1) };
    let mut out = vec![Bitmap::new(mask.width, mask.height); pieces];
    for (x, y) in mask.pixels() {
        let c = if along_x { x } else { y };
        let k = ((c - lo) as usize * pieces) / len as usize;
        out[k].set(x, y, true);
    }
    out.retain(|b| b.count() > 0);
    out
}

/// Splits a mask into the pixels flagged in `side` and the others.
pub fn split_by_facing(mask: &Bitmap, side: &[bool]) -> Vec<Bitmap> {
    let up = side;
    let w = mask.width;
    let top = Bitmap::from_fn(w, mask.height, |x, y| mask.get(x, y) && up[(y * w + x) as usize]);
    let rest = Bitmap::from_fn(w, mask.height, |x, y| mask.get(x, y) && !up[(y * w + x) as usize]);
    let mut out = vec![top, rest];
    out.retain(|b| b.count() > 0);
    out
}

fn bitmap_union(a: &Bitmap, b: &Bitmap) -> Bitmap {
    Bitmap::from_fn(a.width, a.height, |x, y| a.get(x, y) || b.get(x, y))
}

struct FrameOut<T: Scalar> {
    frame: Frame<T>,
    labels: Vec<i32>,
    origins: Vec<MaskOrigin>,
    log: CorruptionLog,
    exact: Vec<(u32, u32)>,
}

fn corrupt<T: Scalar>(
    frame_id: u32,
    whole: Vec<(u32, Bitmap)>,
    up: &[bool],
    spec: &CorruptionSpec<T>,
    seed: u64,
) -> (Vec<(MaskOrigin, Bitmap, T)>, CorruptionLog) {
    let mut rng = frame_rng(seed, frame_id);
    let mut log = CorruptionLog { perfect_masks: whole.len(), ..Default::default() };
    let mut masks: Vec<(MaskOrigin, Bitmap, T)> = Vec::new();
    let mut merged_pairs = Vec::new();
    let mut merges = Vec::new();
    for (i, (inst, bm)) in whole.iter().enumerate() {
        if !rng.random_bool(spec.merge_prob.as_f64()) {
            continue;
        }
        let partner = whole
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, (other, obm))| (contact(bm, obm), j, *other))
            .filter(|&(c, _, _)| c > 0)
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, j, other)) = partner {
            let key = (*inst.min(&other), *inst.max(&other));
            if !merged_pairs.contains(&key) {
                merged_pairs.push(key);
                merges.push((MaskOrigin::Merge { a: key.0, b: key.1 }, bitmap_union(bm, &whole[j].1), T::lit(MERGE_SCORE)));
            }
        }
    }
    log.merged = merges.len();
    let mut fragments = Vec::new();
    for (inst, bm) in &whole {
        let split = rng.random_bool(instance_fragment_prob(spec, seed, *inst));
        let pieces = match (split, spec.fragment_mode) {
            (false, _) => Vec::new(),
            (true, FragmentMode::ImageAxis) => split_mask(bm, spec.fragment_axis_splits),
            (true, FragmentMode::Facing) => split_by_facing(bm, up),
        };
        if pieces.len() >= 2 {
            log.fragmented += 1;
            for (k, p) in pieces.into_iter().enumerate() {
                fragments.push((MaskOrigin::Fragment { instance: *inst, piece: k as u32 }, p, T::lit(FRAGMENT_SCORE)));
            }
            if spec.keep_whole {
                masks.push((MaskOrigin::Whole { instance: *inst }, bm.clone(), T::lit(WHOLE_SCORE)));
            }
        } else {
            masks.push((MaskOrigin::Whole { instance: *inst }, bm.clone(), T::lit(WHOLE_SCORE)));
        }
    }
    masks.extend(merges);
    masks.extend(fragments);
    let before = masks.len();
    masks.retain(|_| !rng.random_bool(spec.drop_prob.as_f64()));
    log.dropped = before - masks.len();
    (masks, log)
}

/// Direction splitting an instance's surfaces for `FragmentMode::Facing`:
/// a seeded azimuth, tilted 30 degrees up.
pub fn facing_direction(seed: u64, instance: i32) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFACE_0000_0000 ^ instance as u64);
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let (s, c) = az.sin_cos();
    let tilt = 30f64.to_radians();
    [c * tilt.cos(), s * tilt.cos(), tilt.sin()]
}

fn render_frame<T: Scalar>(
    frame_id: u32,
    positions: &[Vec3<T>],
    normals: &[Vec3<T>],
    instance: &[i32],
    k: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
    spec: &SceneSpec<T>,
) -> FrameOut<T> {
    let r = render::render(positions, k, pose);
    let labels: Vec<i32> = r.winner.iter().map(|w| w.map_or(-1, |p| instance[p as usize])).collect();
    let mut ids: Vec<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let w = k.width;
    let whole: Vec<(u32, Bitmap)> = ids
        .iter()
        .map(|&inst| (inst as u32, Bitmap::from_fn(w, k.height, |x, y| labels[(y * w + x) as usize] == inst)))
        .collect();
    let n_inst = instance.iter().max().map_or(0, |&m| m + 1);
    let dirs: Vec<[f64; 3]> = (0..n_inst).map(|i| facing_direction(spec.seed, i)).collect();
    let side: Vec<bool> = r
        .winner
        .iter()
        .map(|w| {
            w.is_some_and(|p| {
                let (n, d) = (normals[p as usize], dirs[instance[p as usize] as usize]);
                (0..3).map(|a| n[a].as_f64() * d[a]).sum::<f64>() > 0.0
            })
        })
        .collect();
    let (masks, log) = corrupt(frame_id, whole, &side, &spec.corruption, spec.seed);
    let origins = masks.iter().map(|m| m.0).collect();
    let exact = r
        .winner
        .iter()
        .zip(&r.centred)
        .enumerate()
        .filter_map(|(px, (w, &c))| w.filter(|_| c).map(|p| (px as u32, p)))
        .collect();
    let masks = masks
        .into_iter()
        .enumerate()
        .map(|(j, (_, bm, score))| Mask2D { id: MaskId { frame_id, index: j as u32 }, pixels: bm.encode(), score })
        .collect();
    FrameOut { frame: Frame { frame_id, intrinsics: k.clone(), pose: *pose, depth: r.depth, masks }, labels, origins, log, exact }
}

/// Samples, renders and corrupts a scene. Deterministic for a given spec.
pub fn generate<T: Scalar>(spec: &SceneSpec<T>) -> Result<(SceneBundle<T>, GroundTruth)> {
    check_spec(spec)?;
    let poses = ring_poses(&spec.cameras)?;
    for (i, pose) in poses.iter().enumerate() {
        let eye = pose.center();
        if let Some(j) = spec.primitives.iter().position(|p| sample::contains(p, &eye)) {
            return Err(Error::DegenerateCamera(format!("camera {i} lies inside primitive {j}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut instance = Vec::new();
    for (id, prim) in spec.primitives.iter().enumerate() {
        for (p, n) in sample::sample_primitive(prim, spec.density, &mut rng) {
            positions.push(p);
            normals.push(n);
            instance.push(id as i32);
        }
    }
    if spec.cull_hidden {
        let scanners = scanner_positions(&spec.cameras);
        let keep: Vec<bool> = positions.par_iter().map(|p| seen_by_any(p, &scanners, &spec.primitives)).collect();
        let mut k = keep.iter();
        positions.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        normals.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        instance.retain(|_| *k.next().unwrap());
    }
    if positions.len() < 2 {
        return Err(Error::InvalidScene("density too low: fewer than two points sampled".into()));
    }
    let colors = instance.iter().map(|&i| label_color(i)).collect();
    let k = CameraIntrinsics::from_fov(spec.image.width, spec.image.height, spec.image.hfov_deg);
    let outs: Vec<FrameOut<T>> = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| render_frame(i as u32, &positions, &normals, &instance, &k, pose, spec))
        .collect();
    let mut log = CorruptionLog::default();
    let mut frames = Vec::with_capacity(outs.len());
    let mut frame_labels = Vec::with_capacity(outs.len());
    let mut mask_origins = Vec::with_capacity(outs.len());
    let mut exact_pixels = Vec::with_capacity(outs.len());
    for o in outs {
        log.perfect_masks += o.log.perfect_masks;
        log.fragmented += o.log.fragmented;
        log.merged += o.log.merged;
        log.dropped += o.log.dropped;
        frames.push(o.frame);
        frame_labels.push(o.labels);
        mask_origins.push(o.origins);
        exact_pixels.push(o.exact);
    }
    let cloud = PointCloud { positions, colors: Some(colors), normals: Some(normals) };
    let mut config = spec.config.clone();
    config.seed = spec.seed;
    Ok((
        SceneBundle { cloud, frames, config },
        GroundTruth { point_instance: instance, frame_labels, mask_origins, log, exact_pixels },
    ))
}

/// Mask statistics of a generated scene.
pub fn corruption_report<T: Scalar>(bundle: &SceneBundle<T>, gt: &GroundTruth) -> CorruptionReport {
    let fragment_masks = gt.mask_origins.iter().flatten().filter(|o| matches!(o, MaskOrigin::Fragment { .. })).count();
    let rate = if gt.log.perfect_masks == 0 { 0.0 } else { gt.log.fragmented as f64 / gt.log.perfect_masks as f64 };
    CorruptionReport {
        masks_per_frame: bundle.frames.iter().map(|f| f.masks.len()).collect(),
        perfect_masks: gt.log.perfect_masks,
        fragmented: gt.log.fragmented,
        fragment_masks,
        merged: gt.log.merged,
        dropped: gt.log.dropped,
        fragmentation_rate: rate,
    }
}
