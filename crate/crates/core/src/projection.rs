//! Pinhole projection, the depth-gated visibility test and per-point depth
//! consistency weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, Vec3};
use crate::scene::{CameraIntrinsics, CameraPose, DepthImage, Frame, ValidatedScene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected<T> {
    pub u: T,
    pub v: T,
    /// Depth along the optical axis; may be <= 0 for points behind the camera.
    pub z: T,
}

/// Projects a world point. Returns `None` when the point lies on the camera
/// plane (homogeneous `w = 0`).
#[inline]
pub fn project_point<T: Scalar>(p: &Vec3<T>, k: &CameraIntrinsics<T>, pose: &CameraPose<T>) -> Option<Projected<T>> {
    let m = &pose.world_to_camera;
    let xc = m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3];
    let yc = m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3];
    let zc = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3];
    let uh = k.fx * xc + k.cx * zc;
    let vh = k.fy * yc + k.cy * zc;
    if zc == T::zero() {
        return None;
    }
    Some(Projected { u: uh / zc, v: vh / zc, z: zc })
}

/// Inverse of [`project_point`] for a known depth.
pub fn unproject<T: Scalar>(u: T, v: T, z: T, k: &CameraIntrinsics<T>, pose: &CameraPose<T>) -> Vec3<T> {
    let pc = [(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z];
    let r = pose.rotation();
    let t = pose.translation();
    let d = [pc[0] - t[0], pc[1] - t[1], pc[2] - t[2]];
    [
        r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
        r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
        r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
    ]
}

/// Nearest pixel (round half up) if it falls inside a `width x height` image
/// and the continuous coordinates are themselves in range.
#[inline]
pub fn pixel_of<T: Scalar>(u: T, v: T, width: u32, height: u32) -> Option<(u32, u32)> {
    if !(u >= T::zero() && v >= T::zero()) {
        return None;
    }
    let half = T::lit(0.5);
    let px = (u + half).floor().to_u64()?;
    let py = (v + half).floor().to_u64()?;
    (px < width as u64 && py < height as u64).then_some((px as u32, py as u32))
}

/// Binary visibility: in bounds, valid depth, positive projected depth and
/// relative depth error strictly below `alpha`.
pub fn is_visible<T: Scalar>(u: T, v: T, z: T, depth: &DepthImage<T>, alpha: T) -> bool {
    if !(z > T::zero()) {
        return false;
    }
    let Some((px, py)) = pixel_of(u, v, depth.width, depth.height) else {
        return false;
    };
    let d = depth.get(px, py);
    d > T::zero() && (z - d).abs() < alpha * d
}

/// Linear depth-consistency weight `1 - |z - d| / (alpha d)`.
pub fn depth_weight<T: Scalar>(z: T, d: T, alpha: T) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::InvalidDepth(d.as_f64()));
    }
    Ok((T::one() - (z - d).abs() / (alpha * d)).max(T::zero()))
}

/// Projection of every cloud point into one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FrameProjection<T: Scalar> {
    pub frame_id: u32,
    pub width: u32,
    pub height: u32,
    /// Rounded in-bounds pixel, `None` when outside the image or unprojectable.
    pub pixel: Vec<Option<(u32, u32)>>,
    /// Projected depth `z_c` (NaN when unprojectable).
    pub depth: Vec<T>,
    pub visible: Vec<bool>,
    /// Depth-consistency weight; 0 for invisible points.
    pub weight: Vec<T>,
}

impl<T: Scalar> FrameProjection<T> {
    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    #[inline]
    pub fn visible_pixel(&self, point: usize) -> Option<(u32, u32)> {
        if self.visible[point] {
            self.pixel[point]
        } else {
            None
        }
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProjectionTable<T: Scalar> {
    /// One entry per bundle frame, in bundle order.
    pub frames: Vec<FrameProjection<T>>,
}

/// Projects all points into one frame. With `use_depth_weights = false` every
/// visible point gets weight 1.
pub fn project_frame<T: Scalar>(
    positions: &[Vec3<T>],
    frame: &Frame<T>,
    alpha: T,
    use_depth_weights: bool,
) -> FrameProjection<T> {
    let n = positions.len();
    let mut out = FrameProjection {
        frame_id: frame.frame_id,
        width: frame.intrinsics.width,
        height: frame.intrinsics.height,
        pixel: vec![None; n],
        depth: vec![T::nan(); n],
        visible: vec![false; n],
        weight: vec![T::zero(); n],
    };
    for (i, p) in positions.iter().enumerate() {
        let Some(pr) = project_point(p, &frame.intrinsics, &frame.pose) else {
            continue;
        };
        out.depth[i] = pr.z;
        out.pixel[i] = pixel_of(pr.u, pr.v, frame.depth.width, frame.depth.height);
        if is_visible(pr.u, pr.v, pr.z, &frame.depth, alpha) {
            out.visible[i] = true;
            let (px, py) = out.pixel[i].expect("visible implies in bounds");
            out.weight[i] = if use_depth_weights {
                depth_weight(pr.z, frame.depth.get(px, py), alpha).expect("visible implies valid depth")
            } else {
                T::one()
            };
        }
    }
    out
}

pub fn build_projection_table<T: Scalar>(
    scene: &ValidatedScene<'_, T>,
    alpha: T,
    use_depth_weights: bool,
) -> ProjectionTable<T> {
    let positions = &scene.cloud.positions;
    let frames = scene
        .frames
        .par_iter()
        .map(|f| project_frame(positions, f, alpha, use_depth_weights))
        .collect();
    ProjectionTable { frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k(f: f64, c: f64, w: u32, h: u32) -> CameraIntrinsics<f64> {
        CameraIntrinsics { fx: f, fy: f, cx: c, cy: c, width: w, height: h }
    }

    #[test]
    fn projects_identity_cases() {
        let id = CameraPose::identity();
        let p = project_point(&[0.0, 0.0, 1.0], &k(1.0, 0.0, 4, 4), &id).unwrap();
        assert_eq!((p.u, p.v, p.z), (0.0, 0.0, 1.0));
        let p = project_point(&[0.5, 0.0, 1.0], &k(100.0, 50.0, 200, 200), &id).unwrap();
        assert_abs_diff_eq!(p.u, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 50.0, epsilon = 1e-12);
        assert_eq!(p.z, 1.0);
        let behind = project_point(&[0.0, 0.0, -1.0], &k(1.0, 0.0, 4, 4), &id).unwrap();
        assert_eq!(behind.z, -1.0);
        assert!(project_point(&[1.0, 1.0, 0.0], &k(1.0, 0.0, 4, 4), &id).is_none());
    }

    fn flat(d: f64) -> DepthImage<f64> {
        DepthImage { width: 10, height: 10, data: vec![d; 100] }
    }

    #[test]
    fn visibility_gate() {
        assert!(is_visible(5.0, 5.0, 2.0, &flat(2.0), 0.05));
        assert!(!is_visible(5.0, 5.0, 2.2, &flat(2.0), 0.05));
        assert!(!is_visible(-1.0, 5.0, 2.0, &flat(2.0), 0.05));
        assert!(!is_visible(5.0, 5.0, 2.0, &flat(0.0), 0.05));
        // behind the camera never counts, even with a matching magnitude
        assert!(!is_visible(5.0, 5.0, -2.0, &flat(2.0), 0.05));
        // exactly at the tolerance is invisible
        assert!(!is_visible(5.0, 5.0, 2.5, &flat(2.0), 0.25));
        assert!(!is_visible(9.6, 5.0, 2.0, &flat(2.0), 0.05));
    }

    #[test]
    fn depth_weight_values() {
        assert_eq!(depth_weight(2.0, 2.0, 0.05).unwrap(), 1.0);
        assert_abs_diff_eq!(depth_weight(2.05, 2.0, 0.05).unwrap(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(depth_weight(2.0999, 2.0, 0.05).unwrap(), 0.001, epsilon = 1e-9);
        assert!(matches!(depth_weight(1.0, 0.0, 0.05), Err(Error::InvalidDepth(_))));
    }

    proptest! {
        #[test]
        fn unproject_roundtrip(
            x in -2.0f64..2.0, y in -2.0f64..2.0, z in 0.5f64..5.0,
            yaw in 0.0f64..6.28, ex in -3.0f64..3.0, ey in -3.0f64..3.0,
        ) {
            let eye = [ex, ey, 1.5];
            let target = [ex + yaw.cos(), ey + yaw.sin(), 0.5];
            let pose = CameraPose::look_at(eye, target, [0.0, 0.0, 1.0]).unwrap();
            let kk = k(300.0, 160.0, 320, 320);
            let p = [x, y, z];
            if let Some(pr) = project_point(&p, &kk, &pose) {
                if pr.z.abs() > 1e-3 {
                    let back = unproject(pr.u, pr.v, pr.z, &kk, &pose);
                    for i in 0..3 {
                        prop_assert!((back[i] - p[i]).abs() < 1e-6);
                    }
                }
            }
        }

        #[test]
        fn visible_weight_in_unit_interval_and_monotone_in_alpha(
            z in 0.1f64..4.0, d in 0.1f64..4.0, a1 in 0.01f64..0.99, a2 in 0.01f64..0.99,
        ) {
            let depth = flat(d);
            let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            if is_visible(5.0, 5.0, z, &depth, lo) {
                prop_assert!(is_visible(5.0, 5.0, z, &depth, hi));
                let w = depth_weight(z, d, lo).unwrap();
                prop_assert!(w > 0.0 && w <= 1.0);
            }
        }
    }
}
