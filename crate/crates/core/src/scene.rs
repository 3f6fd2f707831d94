//! Core scene representation: point cloud, posed RGB-D frames, per-frame
//! mask sets and the pipeline configuration, plus whole-bundle validation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::Rle;
use crate::scalar::{Scalar, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PointCloud<T: Scalar> {
    pub positions: Vec<Vec3<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<[u8; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec3<T>>>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn from_positions(positions: Vec<Vec3<T>>) -> Self {
        Self { positions, colors: None, normals: None }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Reorders every per-point attribute by `order` (new index -> old index).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            colors: self.colors.as_ref().map(|c| order.iter().map(|&i| c[i]).collect()),
            normals: self.normals.as_ref().map(|n| order.iter().map(|&i| n[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CameraIntrinsics<T: Scalar> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Scalar> CameraIntrinsics<T> {
    /// Centered principal point with a horizontal field of view in degrees.
    pub fn from_fov(width: u32, height: u32, hfov_deg: T) -> Self {
        let two = T::lit(2.0);
        let f = T::from_count(width as usize) / two / (hfov_deg.to_radians() / two).tan();
        Self {
            fx: f,
            fy: f,
            cx: T::from_count(width as usize) / two,
            cy: T::from_count(height as usize) / two,
            width,
            height,
        }
    }
}

/// Rigid world->camera transform (camera looks down +z, x right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CameraPose<T: Scalar> {
    pub world_to_camera: [[T; 4]; 4],
}

impl<T: Scalar> CameraPose<T> {
    pub fn identity() -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { world_to_camera: m }
    }

    pub fn from_rotation_translation(r: [[T; 3]; 3], t: Vec3<T>) -> Self {
        let mut m = Self::identity().world_to_camera;
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
            m[i][3] = t[i];
        }
        Self { world_to_camera: m }
    }

    /// Camera at `eye` looking at `target`, with `up` as the world up hint.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>) -> Result<Self> {
        use crate::scalar::{cross3, norm3, sub3};
        let fwd = sub3(&target, &eye);
        let n = norm3(&fwd);
        if n <= T::epsilon() {
            return Err(Error::DegenerateCamera("eye coincides with target".into()));
        }
        let z = fwd.map(|c| c / n);
        let right = cross3(&z, &up);
        let rn = norm3(&right);
        if rn <= T::lit(1e-9) {
            return Err(Error::DegenerateCamera("view direction parallel to up".into()));
        }
        let x = right.map(|c| c / rn);
        let y = cross3(&z, &x);
        let r = [x, y, z];
        let t = [
            -(r[0][0] * eye[0] + r[0][1] * eye[1] + r[0][2] * eye[2]),
            -(r[1][0] * eye[0] + r[1][1] * eye[1] + r[1][2] * eye[2]),
            -(r[2][0] * eye[0] + r[2][1] * eye[1] + r[2][2] * eye[2]),
        ];
        Ok(Self::from_rotation_translation(r, t))
    }

    pub fn rotation(&self) -> [[T; 3]; 3] {
        let m = &self.world_to_camera;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn translation(&self) -> Vec3<T> {
        let m = &self.world_to_camera;
        [m[0][3], m[1][3], m[2][3]]
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        let r = self.rotation();
        let t = self.translation();
        let mut c = [T::zero(); 3];
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = -(r[0][j] * t[0] + r[1][j] * t[1] + r[2][j] * t[2]);
        }
        c
    }

    /// Builds a world->camera pose from a camera->world matrix.
    pub fn from_camera_to_world(m: [[T; 4]; 4]) -> Self {
        let r = [
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ];
        let c = [m[0][3], m[1][3], m[2][3]];
        let t = [
            -(r[0][0] * c[0] + r[0][1] * c[1] + r[0][2] * c[2]),
            -(r[1][0] * c[0] + r[1][1] * c[1] + r[1][2] * c[2]),
            -(r[2][0] * c[0] + r[2][1] * c[1] + r[2][2] * c[2]),
        ];
        Self::from_rotation_translation(r, t)
    }
}

/// Depth in meters, row-major; 0 marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DepthImage<T: Scalar> {
    pub width: u32,
    pub height: u32,
    pub data: Vec<T>,
}

impl<T: Scalar> DepthImage<T> {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![T::zero(); width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> T {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: T) {
        self.data[(y * self.width + x) as usize] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MaskId {
    pub frame_id: u32,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mask2D<T: Scalar> {
    pub id: MaskId,
    pub pixels: Rle,
    /// Segmenter-reported prediction quality in `[0, 1]`.
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Frame<T: Scalar> {
    pub frame_id: u32,
    pub intrinsics: CameraIntrinsics<T>,
    pub pose: CameraPose<T>,
    pub depth: DepthImage<T>,
    pub masks: Vec<Mask2D<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "")]
pub struct PipelineConfig<T: Scalar> {
    /// Relative depth tolerance of the visibility test.
    pub alpha: T,
    /// Frame-visibility threshold for candidate masks.
    pub tau_f: T,
    /// Mask-visibility threshold for candidate masks.
    pub tau_m: T,
    /// Region-growing merge threshold.
    pub tau_merge: T,
    /// IoU threshold of the score-ordered NMS building coarse maps.
    pub nms_iou: T,
    /// IoU threshold of the consistency-ordered NMS building refined maps.
    pub consistency_nms_iou: T,
    pub refine_max_iters: usize,
    /// After reassignment, join adjacent regions the refined graph links
    /// above `tau_merge`.
    pub refine_merge: bool,
    pub k_graph: usize,
    pub weight_scale: T,
    /// Strength of the normal term in the superpoint edge dissimilarity.
    pub normal_weight: T,
    pub min_size: usize,
    pub seed: u64,
    pub use_depth_weights: bool,
    pub use_matching: bool,
    pub use_refinement: bool,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.05),
            tau_f: T::lit(0.3),
            tau_m: T::lit(0.9),
            tau_merge: T::lit(0.5),
            nms_iou: T::lit(0.5),
            consistency_nms_iou: T::lit(0.5),
            refine_max_iters: 10,
            refine_merge: true,
            k_graph: 12,
            weight_scale: T::lit(0.05),
            normal_weight: T::lit(0.5),
            min_size: 20,
            seed: 0,
            use_depth_weights: true,
            use_matching: true,
            use_refinement: true,
        }
    }
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let unit = [
            ("alpha", self.alpha),
            ("tau_f", self.tau_f),
            ("tau_m", self.tau_m),
            ("tau_merge", self.tau_merge),
            ("nms_iou", self.nms_iou),
            ("consistency_nms_iou", self.consistency_nms_iou),
        ];
        for (name, v) in unit {
            if !(v > T::zero() && v < T::one()) {
                out.push(Violation::new(format!("config.{name}"), format!("{v} not in (0,1)")));
            }
        }
        if self.refine_max_iters < 1 {
            out.push(Violation::new("config.refine_max_iters", "must be >= 1"));
        }
        if self.k_graph < 1 {
            out.push(Violation::new("config.k_graph", "must be >= 1"));
        }
        if !(self.normal_weight >= T::zero() && self.normal_weight.is_finite()) {
            out.push(Violation::new("config.normal_weight", "must be finite and >= 0"));
        }
        if !(self.weight_scale > T::zero()) {
            out.push(Violation::new("config.weight_scale", "must be > 0"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SceneBundle<T: Scalar> {
    pub cloud: PointCloud<T>,
    pub frames: Vec<Frame<T>>,
    #[serde(default)]
    pub config: PipelineConfig<T>,
}

/// One invariant violation, addressed by a path into the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

const NORMAL_TOL: f64 = 1e-4;
const ROTATION_TOL: f64 = 1e-5;

/// Collects every invariant violation of the bundle. An empty report means
/// the bundle is valid.
pub fn validate_scene<T: Scalar>(bundle: &SceneBundle<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    validate_cloud(&bundle.cloud, &mut out);
    if bundle.frames.is_empty() {
        out.push(Violation::new("frames", "at least one frame required"));
    }
    let mut seen = BTreeSet::new();
    for (fi, frame) in bundle.frames.iter().enumerate() {
        if !seen.insert(frame.frame_id) {
            out.push(Violation::new(
                format!("frames[{fi}].frame_id"),
                format!("duplicate frame id {}", frame.frame_id),
            ));
        }
        validate_frame(frame, &format!("frames[{fi}]"), &mut out);
    }
    out.extend(bundle.config.violations());
    out
}

fn validate_cloud<T: Scalar>(cloud: &PointCloud<T>, out: &mut Vec<Violation>) {
    if cloud.positions.is_empty() {
        out.push(Violation::new("cloud.positions", "point cloud is empty"));
    }
    for (i, p) in cloud.positions.iter().enumerate() {
        if p.iter().any(|c| !c.is_finite()) {
            out.push(Violation::new(format!("cloud.positions[{i}]"), "non-finite coordinate"));
        }
    }
    if let Some(colors) = &cloud.colors {
        if colors.len() != cloud.len() {
            out.push(Violation::new(
                "cloud.colors",
                format!("{} colors for {} points", colors.len(), cloud.len()),
            ));
        }
    }
    if let Some(normals) = &cloud.normals {
        if normals.len() != cloud.len() {
            out.push(Violation::new(
                "cloud.normals",
                format!("{} normals for {} points", normals.len(), cloud.len()),
            ));
        }
        for (i, n) in normals.iter().enumerate() {
            let len = crate::scalar::norm3(n).as_f64();
            if !((len - 1.0).abs() <= NORMAL_TOL) {
                out.push(Violation::new(format!("cloud.normals[{i}]"), format!("length {len} is not unit")));
            }
        }
    }
}

fn validate_frame<T: Scalar>(frame: &Frame<T>, path: &str, out: &mut Vec<Violation>) {
    let k = &frame.intrinsics;
    if !(k.fx > T::zero() && k.fx.is_finite()) || !(k.fy > T::zero() && k.fy.is_finite()) {
        out.push(Violation::new(format!("{path}.intrinsics"), "focal lengths must be positive"));
    }
    if k.width == 0 || k.height == 0 {
        out.push(Violation::new(format!("{path}.intrinsics"), "image size must be positive"));
    }
    let (w, h) = (T::from_count(k.width as usize), T::from_count(k.height as usize));
    if !(k.cx >= T::zero() && k.cx < w) || !(k.cy >= T::zero() && k.cy < h) {
        out.push(Violation::new(format!("{path}.intrinsics"), "principal point outside image"));
    }

    validate_pose(&frame.pose, &format!("{path}.pose"), out);

    let d = &frame.depth;
    if d.width != k.width || d.height != k.height {
        out.push(Violation::new(
            format!("{path}.depth"),
            format!("depth is {}x{} but intrinsics are {}x{}", d.width, d.height, k.width, k.height),
        ));
    } else if d.data.len() != d.width as usize * d.height as usize {
        out.push(Violation::new(format!("{path}.depth"), "data length does not match size"));
    }
    if let Some(i) = d.data.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        out.push(Violation::new(format!("{path}.depth.data[{i}]"), "depth must be finite and >= 0"));
    }

    let mut indices = BTreeSet::new();
    for (mi, mask) in frame.masks.iter().enumerate() {
        let mpath = format!("{path}.masks[{mi}]");
        if mask.id.frame_id != frame.frame_id {
            out.push(Violation::new(
                format!("{mpath}.id"),
                format!("mask frame id {} differs from frame {}", mask.id.frame_id, frame.frame_id),
            ));
        }
        if !indices.insert(mask.id.index) {
            out.push(Violation::new(format!("{mpath}.id"), format!("duplicate mask index {}", mask.id.index)));
        }
        let expected = k.width as u64 * k.height as u64;
        if mask.pixels.size != [k.height, k.width] || mask.pixels.decoded_len() != expected {
            out.push(Violation::new(
                format!("{mpath}.rle"),
                format!(
                    "RLE of size {:?} decodes to {} bits, expected {}",
                    mask.pixels.size,
                    mask.pixels.decoded_len(),
                    expected
                ),
            ));
        } else if mask.pixels.area() == 0 {
            out.push(Violation::new(format!("{mpath}.rle"), "mask has no pixels"));
        }
        if !(mask.score >= T::zero() && mask.score <= T::one()) {
            out.push(Violation::new(format!("{mpath}.score"), format!("score {} not in [0,1]", mask.score)));
        }
    }
}

fn validate_pose<T: Scalar>(pose: &CameraPose<T>, path: &str, out: &mut Vec<Violation>) {
    let m = &pose.world_to_camera;
    if m.iter().flatten().any(|v| !v.is_finite()) {
        out.push(Violation::new(path, "non-finite entry"));
        return;
    }
    let bottom = [m[3][0], m[3][1], m[3][2], m[3][3]].map(|v| v.as_f64());
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        out.push(Violation::new(path, "last row must be [0 0 0 1]"));
    }
    let r = pose.rotation();
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let d = crate::scalar::dot3(&r[i], &r[j]).as_f64();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((d - target).abs());
        }
    }
    let det = crate::scalar::dot3(&r[0], &crate::scalar::cross3(&r[1], &r[2])).as_f64();
    if worst > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL * 3.0 {
        out.push(Violation::new(path, format!("rotation not orthonormal (err {worst:.2e}, det {det:.6})")));
    }
}

/// A bundle that has passed [`validate_scene`]; stage entry points require it.
#[derive(Debug, Clone, Copy)]
pub struct ValidatedScene<'a, T: Scalar>(&'a SceneBundle<T>);

impl<'a, T: Scalar> ValidatedScene<'a, T> {
    pub fn new(bundle: &'a SceneBundle<T>) -> Result<Self> {
        let report = validate_scene(bundle);
        if report.is_empty() {
            Ok(Self(bundle))
        } else {
            let shown: Vec<String> = report.iter().take(5).map(|v| v.to_string()).collect();
            Err(Error::InvalidScene(format!(
                "{} violation(s): {}{}",
                report.len(),
                shown.join("; "),
                if report.len() > 5 { "; ..." } else { "" }
            )))
        }
    }
}

impl<T: Scalar> std::ops::Deref for ValidatedScene<'_, T> {
    type Target = SceneBundle<T>;

    fn deref(&self) -> &SceneBundle<T> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rle::Bitmap;

    fn frame(id: u32, w: u32, h: u32) -> Frame<f64> {
        let mask = Bitmap::from_fn(w, h, |x, _| x < w / 2).encode();
        Frame {
            frame_id: id,
            intrinsics: CameraIntrinsics { fx: 10.0, fy: 10.0, cx: w as f64 / 2.0, cy: h as f64 / 2.0, width: w, height: h },
            pose: CameraPose::identity(),
            depth: DepthImage { width: w, height: h, data: vec![1.0; (w * h) as usize] },
            masks: vec![Mask2D { id: MaskId { frame_id: id, index: 0 }, pixels: mask, score: 0.9 }],
        }
    }

    fn bundle() -> SceneBundle<f64> {
        SceneBundle {
            cloud: PointCloud::from_positions(vec![[0.0, 0.0, 1.0], [0.1, 0.0, 1.0]]),
            frames: vec![frame(0, 20, 20), frame(1, 20, 20)],
            config: PipelineConfig::default(),
        }
    }

    #[test]
    fn well_formed_bundle_is_valid() {
        assert!(validate_scene(&bundle()).is_empty());
        assert!(ValidatedScene::new(&bundle()).is_ok());
    }

    #[test]
    fn depth_dimension_mismatch_reported_once() {
        let mut b = bundle();
        b.frames[0].depth = DepthImage { width: 10, height: 10, data: vec![1.0; 100] };
        let report = validate_scene(&b);
        assert_eq!(report.len(), 1, "{report:?}");
        assert_eq!(report[0].path, "frames[0].depth");
    }

    #[test]
    fn rle_length_violation() {
        let mut b = bundle();
        b.frames[1].masks[0].pixels.counts.push(3);
        let report = validate_scene(&b);
        assert_eq!(report.len(), 1, "{report:?}");
        assert_eq!(report[0].path, "frames[1].masks[0].rle");
    }

    #[test]
    fn validation_is_pure() {
        let mut b = bundle();
        b.frames[1].frame_id = 0;
        b.config.alpha = 1.5;
        assert_eq!(validate_scene(&b), validate_scene(&b));
        // duplicate frame id, mask id now disagreeing with its frame, alpha out of range
        assert_eq!(validate_scene(&b).len(), 3);
    }

    #[test]
    fn non_orthonormal_pose_rejected() {
        let mut b = bundle();
        b.frames[0].pose.world_to_camera[0][0] = 1.1;
        let report = validate_scene(&b);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].path, "frames[0].pose");
    }

    #[test]
    fn look_at_and_camera_to_world_agree() {
        let pose = CameraPose::<f64>::look_at([2.0, 1.0, 1.5], [0.0, 0.0, 0.3], [0.0, 0.0, 1.0]).unwrap();
        let c = pose.center();
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12 && (c[2] - 1.5).abs() < 1e-12);
        // invert to camera->world and back
        let r = pose.rotation();
        let mut c2w = CameraPose::<f64>::identity().world_to_camera;
        for i in 0..3 {
            for j in 0..3 {
                c2w[i][j] = r[j][i];
            }
            c2w[i][3] = c[i];
        }
        let back = CameraPose::from_camera_to_world(c2w);
        for i in 0..4 {
            for j in 0..4 {
                assert!((back.world_to_camera[i][j] - pose.world_to_camera[i][j]).abs() < 1e-12);
            }
        }
        assert!(validate_scene(&SceneBundle {
            frames: vec![Frame { pose, ..frame(0, 8, 8) }],
            ..bundle()
        })
        .is_empty());
    }

    #[test]
    fn serde_roundtrip_is_exact() {
        let mut b = bundle();
        b.cloud.positions[0] = [0.1 + 0.2, std::f64::consts::PI, -1e-300];
        let json = serde_json::to_string(&b).unwrap();
        let back: SceneBundle<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }
}
