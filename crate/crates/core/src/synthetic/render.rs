//! Point-splat z-buffer.

use crate::projection::{pixel_of, project_point};
use crate::scalar::{Scalar, Vec3};
use crate::scene::{CameraIntrinsics, CameraPose, DepthImage};

/// A splat may replace a pixel's own nearest point only when it is closer by
/// more than this relative margin, so surfaces keep their exact depths while
/// occluding edges still cover what lies behind them.
const TIER_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
struct Hit<T> {
    z: T,
    point: u32,
}

fn closer<T: Scalar>(slot: &mut Option<Hit<T>>, hit: Hit<T>) {
    match slot {
        Some(h) if h.z < hit.z || (h.z == hit.z && h.point <= hit.point) => {}
        _ => *slot = Some(hit),
    }
}

pub(crate) struct Render<T: Scalar> {
    pub depth: DepthImage<T>,
    /// Point that determined each pixel's depth.
    pub winner: Vec<Option<u32>>,
    /// True where the winner projects to this very pixel.
    pub centred: Vec<bool>,
}

/// Renders depth by splatting every point over its 3x3 pixel neighbourhood.
pub(crate) fn render<T: Scalar>(positions: &[Vec3<T>], k: &CameraIntrinsics<T>, pose: &CameraPose<T>) -> Render<T> {
    let (w, h) = (k.width, k.height);
    let n = (w * h) as usize;
    let mut centre: Vec<Option<Hit<T>>> = vec![None; n];
    let mut splat: Vec<Option<Hit<T>>> = vec![None; n];
    for (i, p) in positions.iter().enumerate() {
        let Some(pr) = project_point(p, k, pose) else { continue };
        if !(pr.z > T::zero()) {
            continue;
        }
        let Some((px, py)) = pixel_of(pr.u, pr.v, w, h) else { continue };
        let hit = Hit { z: pr.z, point: i as u32 };
        closer(&mut centre[(py * w + px) as usize], hit);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (px as i64 + dx, py as i64 + dy);
                if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                    closer(&mut splat[(y as u32 * w + x as u32) as usize], hit);
                }
            }
        }
    }
    let margin = T::one() + T::lit(TIER_MARGIN);
    let mut depth = DepthImage::zeros(w, h);
    let mut winner = vec![None; n];
    let mut centred = vec![false; n];
    for idx in 0..n {
        let chosen = match (centre[idx], splat[idx]) {
            (Some(c), Some(s)) if c.z <= s.z * margin => Some((c, true)),
            (_, Some(s)) => Some((s, false)),
            (Some(c), None) => Some((c, true)),
            (None, None) => None,
        };
        if let Some((hit, is_centre)) = chosen {
            depth.data[idx] = hit.z;
            winner[idx] = Some(hit.point);
            centred[idx] = is_centre;
        }
    }
    Render { depth, winner, centred }
}
