//! Pose and intrinsics text files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scene::{CameraIntrinsics, CameraPose};

/// Convention of the matrix stored in a pose file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PoseConvention {
    #[default]
    WorldToCamera,
    CameraToWorld,
}

fn numbers(text: &str, path: &Path) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|w| w.parse::<f64>().map_err(|_| Error::format(path, format!("`{w}` is not a number"))))
        .collect()
}

/// Four rows of four numbers, row-major.
pub fn parse_pose<T: Scalar>(text: &str, path: &Path, convention: PoseConvention) -> Result<CameraPose<T>> {
    let v = numbers(text, path)?;
    if v.len() != 16 {
        return Err(Error::format(path, format!("expected 16 numbers, found {}", v.len())));
    }
    let mut m = [[T::zero(); 4]; 4];
    for (i, x) in v.iter().enumerate() {
        m[i / 4][i % 4] = T::lit(*x);
    }
    Ok(match convention {
        PoseConvention::WorldToCamera => CameraPose { world_to_camera: m },
        PoseConvention::CameraToWorld => CameraPose::from_camera_to_world(m),
    })
}

pub fn format_pose<T: Scalar>(pose: &CameraPose<T>) -> String {
    let mut s = String::new();
    for row in &pose.world_to_camera {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s += &cells.join(" ");
        s.push('\n');
    }
    s
}

/// `fx fy cx cy width height` on one line.
pub fn parse_intrinsics<T: Scalar>(text: &str, path: &Path) -> Result<CameraIntrinsics<T>> {
    let v = numbers(text, path)?;
    if v.len() != 6 {
        return Err(Error::format(path, format!("expected fx fy cx cy width height, found {} numbers", v.len())));
    }
    let dim = |x: f64, name: &str| {
        if x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as u32)
        } else {
            Err(Error::format(path, format!("{name} `{x}` is not a positive integer")))
        }
    };
    Ok(CameraIntrinsics {
        fx: T::lit(v[0]),
        fy: T::lit(v[1]),
        cx: T::lit(v[2]),
        cy: T::lit(v[3]),
        width: dim(v[4], "width")?,
        height: dim(v[5], "height")?,
    })
}

pub fn format_intrinsics<T: Scalar>(k: &CameraIntrinsics<T>) -> String {
    format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
}

pub fn read_pose<T: Scalar>(path: &Path, convention: PoseConvention) -> Result<CameraPose<T>> {
    parse_pose(&super::read_string(path)?, path, convention)
}

pub fn read_intrinsics<T: Scalar>(path: &Path) -> Result<CameraIntrinsics<T>> {
    parse_intrinsics(&super::read_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_roundtrip_is_exact() {
        let pose = CameraPose::<f64>::look_at([2.0, 1.0, 1.5], [0.0, 0.1, 0.3], [0.0, 0.0, 1.0]).unwrap();
        let p = Path::new("p.txt");
        assert_eq!(parse_pose::<f64>(&format_pose(&pose), p, PoseConvention::WorldToCamera).unwrap(), pose);
    }

    #[test]
    fn camera_to_world_input_is_inverted() {
        // camera at (1, 2, 3), axes aligned with the world
        let text = "1 0 0 1\n0 1 0 2\n0 0 1 3\n0 0 0 1\n";
        let pose: CameraPose<f64> = parse_pose(text, Path::new("p.txt"), PoseConvention::CameraToWorld).unwrap();
        assert_eq!(pose.translation(), [-1.0, -2.0, -3.0]);
        assert_eq!(pose.center(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn intrinsics_parse_and_errors() {
        let p = Path::new("k.txt");
        let k: CameraIntrinsics<f64> = parse_intrinsics("500 500 319.5 239.5 640 480", p).unwrap();
        assert_eq!((k.fx, k.cx, k.width, k.height), (500.0, 319.5, 640, 480));
        assert_eq!(parse_intrinsics::<f64>(&format_intrinsics(&k), p).unwrap(), k);
        assert!(parse_intrinsics::<f64>("1 2 3 4 5", p).is_err());
        assert!(parse_intrinsics::<f64>("1 2 3 4 5.5 6", p).is_err());
        assert!(parse_pose::<f64>("1 2 x", p, PoseConvention::WorldToCamera).unwrap_err().to_string().contains("`x`"));
    }
}
