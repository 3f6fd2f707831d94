//! Seeded scene families used by the test suites and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CameraRing, CorruptionSpec, FragmentMode, ImageSpec, Primitive, SceneSpec};
use crate::scene::PipelineConfig;

pub const DENSITY: f64 = 15_000.0;
/// Clearance between separated objects; larger than the depth tolerance at
/// the farthest object so no surface leaks through another's depth gate.
pub const GAP: f64 = 0.35;

fn ring(count: usize) -> CameraRing<f64> {
    CameraRing { count, radius: 2.0, height: 2.0, target: [0.0, 0.0, 0.1], phase_deg: 17.0 }
}

fn image() -> ImageSpec<f64> {
    ImageSpec { width: 200, height: 150, hfov_deg: 55.0 }
}

fn random_object(rng: &mut ChaCha8Rng, center_xy: [f64; 2], base_z: f64) -> (Primitive<f64>, f64) {
    if rng.random_bool(0.6) {
        let size: [f64; 3] = [rng.random_range(0.15..0.3), rng.random_range(0.15..0.3), rng.random_range(0.12..0.32)];
        let yaw = rng.random_range(0.0..std::f64::consts::PI);
        let reach = 0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt();
        (Primitive::Box { center: [center_xy[0], center_xy[1], base_z + size[2] / 2.0], size, yaw }, reach)
    } else {
        let radius = rng.random_range(0.06..0.12);
        let height = rng.random_range(0.12..0.32);
        (Primitive::Cylinder { center: [center_xy[0], center_xy[1], base_z + height / 2.0], radius, height }, radius)
    }
}

/// Places `reaches.len()` footprints in a disk so that circles keep `gap`.
fn place(rng: &mut ChaCha8Rng, reaches: &[f64], gap: f64, mut spread: f64) -> Vec<[f64; 2]> {
    loop {
        let mut placed: Vec<([f64; 2], f64)> = Vec::new();
        for &r in reaches {
            for _ in 0..400 {
                let c: [f64; 2] = [rng.random_range(-spread..spread), rng.random_range(-spread..spread)];
                if c[0].hypot(c[1]) > spread {
                    continue;
                }
                if placed.iter().all(|(p, pr)| (c[0] - p[0]).hypot(c[1] - p[1]) >= r + pr + gap) {
                    placed.push((c, r));
                    break;
                }
            }
        }
        if placed.len() == reaches.len() {
            return placed.into_iter().map(|(c, _)| c).collect();
        }
        spread += 0.1;
    }
}

/// 2-6 separated objects without floor, 4-12 cameras, no corruption.
pub fn perfect_scene(seed: u64) -> SceneSpec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0001);
    let n = rng.random_range(2..=6);
    let cameras = rng.random_range(4..=12);
    let mut objects: Vec<(Primitive<f64>, f64)> = (0..n).map(|_| random_object(&mut rng, [0.0, 0.0], 0.0)).collect();
    let reaches: Vec<f64> = objects.iter().map(|o| o.1).collect();
    let centers = place(&mut rng, &reaches, GAP, 0.6);
    for ((prim, _), c) in objects.iter_mut().zip(&centers) {
        shift(prim, *c);
    }
    SceneSpec {
        primitives: objects.into_iter().map(|o| o.0).collect(),
        density: DENSITY,
        cameras: ring(cameras),
        image: image(),
        corruption: CorruptionSpec::default(),
        seed,
        cull_hidden: true,
        config: PipelineConfig::default(),
    }
}

fn shift(prim: &mut Primitive<f64>, by: [f64; 2]) {
    let c = match prim {
        Primitive::Box { center, .. } | Primitive::Cylinder { center, .. } | Primitive::Plane { center, .. } => center,
    };
    c[0] += by[0];
    c[1] += by[1];
}

fn scale(prim: &mut Primitive<f64>, k: f64) {
    match prim {
        Primitive::Box { center, size, .. } => {
            center.iter_mut().chain(size.iter_mut()).for_each(|v| *v *= k);
        }
        Primitive::Cylinder { center, radius, height } => {
            center.iter_mut().for_each(|v| *v *= k);
            *radius *= k;
            *height *= k;
        }
        Primitive::Plane { center, u, v } => {
            center.iter_mut().chain(u.iter_mut()).chain(v.iter_mut()).for_each(|x| *x *= k);
        }
    }
}

/// Object scale of the corrupted suite. Objects there are large compared
/// with the depth tolerance, as in real rooms.
pub const SUITE_SCALE: f64 = 4.0;
const SUITE_GAP: f64 = 0.3;

fn suite_ring(count: usize) -> CameraRing<f64> {
    CameraRing { count, radius: 4.0, height: 3.2, target: [0.0, 0.0, 0.7], phase_deg: 17.0 }
}

fn suite_image() -> ImageSpec<f64> {
    ImageSpec { width: 240, height: 180, hfov_deg: 60.0 }
}

/// Corruption used by the corrupted suite.
pub fn suite_corruption() -> CorruptionSpec<f64> {
    CorruptionSpec {
        fragment_prob: 0.5,
        fragment_axis_splits: 2,
        merge_prob: 0.0,
        drop_prob: 0.05,
        keep_whole: true,
        fragment_mode: FragmentMode::Facing,
        instance_bias: 0.65,
    }
}

/// Pipeline settings of the corrupted suite: smaller superpoints that break
/// at creases, so touching objects never share one.
pub fn suite_config() -> PipelineConfig<f64> {
    PipelineConfig { weight_scale: 1.0, normal_weight: 30.0, ..PipelineConfig::default() }
}

/// Camera count of the corrupted suite.
pub const SUITE_CAMERAS: usize = 8;

/// 3-4 groups of objects; a group is a single object, a stack of two, or a
/// small box in front of a wide one. Masks are fragmented and dropped.
pub fn corrupted_scene(seed: u64, cameras: usize) -> SceneSpec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0002);
    let groups = rng.random_range(3..=4);
    let mut members: Vec<Vec<Primitive<f64>>> = Vec::new();
    let mut reaches = Vec::new();
    for _ in 0..groups {
        let kind = rng.random_range(0..10);
        let yaw = rng.random_range(0.0..std::f64::consts::PI);
        if kind < 3 {
            // upright, so the image bbox is taller than wide
            let h = rng.random_range(0.3..0.45);
            if rng.random_bool(0.6) {
                let size: [f64; 3] = [rng.random_range(0.12..0.22), rng.random_range(0.12..0.22), h];
                reaches.push(0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt());
                members.push(vec![Primitive::Box { center: [0.0, 0.0, h / 2.0], size, yaw }]);
            } else {
                let radius = rng.random_range(0.06..0.1);
                reaches.push(radius);
                members.push(vec![Primitive::Cylinder { center: [0.0, 0.0, h / 2.0], radius, height: h }]);
            }
        } else if kind < 6 {
            let size = [rng.random_range(0.22..0.32), rng.random_range(0.22..0.32), rng.random_range(0.15..0.25)];
            let base = Primitive::Box { center: [0.0, 0.0, size[2] / 2.0], size, yaw };
            let h = rng.random_range(0.15..0.25);
            let top = if rng.random_bool(0.5) {
                let s = [size[0] * 0.6, size[1] * 0.6, h];
                Primitive::Box { center: [0.0, 0.0, size[2] + h / 2.0], size: s, yaw: yaw + 0.3 }
            } else {
                let radius = size[0].min(size[1]) * 0.3;
                Primitive::Cylinder { center: [0.0, 0.0, size[2] + h / 2.0], radius, height: h }
            };
            reaches.push(0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt());
            members.push(vec![base, top]);
        } else {
            // a small object just in front of a wide one, closer than the
            // depth tolerance, so occluded points of the back one leak
            let back: [f64; 3] = [rng.random_range(0.25..0.35), rng.random_range(0.1..0.15), rng.random_range(0.3..0.45)];
            let gap = rng.random_range(0.025..0.04);
            let front: [f64; 3] = [rng.random_range(0.1..0.16), rng.random_range(0.08..0.12), rng.random_range(0.15..0.25)];
            let off = back[1] / 2.0 + gap + front[1] / 2.0;
            let (s, c) = yaw.sin_cos();
            let shift = |d: f64| [d * -s, d * c];
            let pb = shift(-off / 2.0);
            let pf = shift(off / 2.0);
            members.push(vec![
                Primitive::Box { center: [pb[0], pb[1], back[2] / 2.0], size: back, yaw },
                Primitive::Box { center: [pf[0], pf[1], front[2] / 2.0], size: front, yaw },
            ]);
            reaches.push(0.5 * (back[0] * back[0] + (back[1] + off).powi(2)).sqrt());
        }
    }
    let centers = place(&mut rng, &reaches, SUITE_GAP / SUITE_SCALE, 0.3);
    let mut primitives = Vec::new();
    for (group, c) in members.into_iter().zip(&centers) {
        for mut p in group {
            shift(&mut p, *c);
            scale(&mut p, SUITE_SCALE);
            primitives.push(p);
        }
    }
    SceneSpec {
        primitives,
        density: DENSITY / (SUITE_SCALE * SUITE_SCALE),
        cameras: suite_ring(cameras),
        image: suite_image(),
        corruption: suite_corruption(),
        seed,
        cull_hidden: true,
        config: suite_config(),
    }
}

/// A small horizontal plane hovering `gap` metres above a larger one; the
/// lower plane is instance 0, the upper instance 1.
pub fn layered_planes(gap: f64, cameras: usize) -> SceneSpec<f64> {
    SceneSpec {
        primitives: vec![
            Primitive::Plane { center: [0.0, 0.0, 0.0], u: [0.6, 0.0, 0.0], v: [0.0, 0.6, 0.0] },
            Primitive::Plane { center: [0.0, 0.0, gap], u: [0.3, 0.0, 0.0], v: [0.0, 0.3, 0.0] },
        ],
        density: DENSITY,
        cameras: ring(cameras),
        image: image(),
        corruption: CorruptionSpec::default(),
        seed: 0,
        cull_hidden: true,
        config: PipelineConfig::default(),
    }
}
