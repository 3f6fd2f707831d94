//! Per-point label files, superpoint files and coloured label clouds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, Vec3};
use crate::scene::PointCloud;
use crate::superpoint::Superpoint;
use crate::synthetic::label_color;

/// One integer per line.
pub fn format_labels<L: std::fmt::Display>(labels: &[L]) -> String {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s += &l.to_string();
        s.push('\n');
    }
    s
}

pub fn parse_labels<L: std::str::FromStr>(text: &str, path: &Path) -> Result<Vec<L>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::format(path, format!("line {}: `{}` is not a valid label", i + 1, l.trim())))
        })
        .collect()
}

pub fn write_labels<L: std::fmt::Display>(path: &Path, labels: &[L]) -> Result<()> {
    super::write_bytes(path, format_labels(labels).as_bytes())
}

/// Instance labels; `-1` marks unlabelled points.
pub fn read_labels(path: &Path) -> Result<Vec<i32>> {
    parse_labels(&super::read_string(path)?, path)
}

/// Cloud coloured by label, positions only.
pub fn write_label_ply<T: Scalar>(path: &Path, positions: &[Vec3<T>], labels: &[i32]) -> Result<()> {
    if positions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} points but {} labels", positions.len(), labels.len())));
    }
    let cloud = PointCloud {
        positions: positions.to_vec(),
        colors: Some(labels.iter().map(|&l| label_color(l)).collect()),
        normals: None,
    };
    super::ply::write_ply(path, &cloud)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpointSummary {
    pub id: u32,
    pub point_count: usize,
    pub centroid: [f64; 3],
}

/// Writes the per-point superpoint ids and a JSON sidecar (`<path>.json`)
/// with centroids and counts.
pub fn write_superpoints<T: Scalar>(path: &Path, superpoints: &[Superpoint<T>], n_points: usize) -> Result<()> {
    let ids = crate::superpoint::point_labels(superpoints, n_points);
    write_labels(path, &ids)?;
    let summary: Vec<SuperpointSummary> = superpoints
        .iter()
        .map(|s| SuperpointSummary { id: s.id, point_count: s.point_count, centroid: s.centroid.map(|c| c.as_f64()) })
        .collect();
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    super::write_bytes(&sidecar(path), &json)
}

pub fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Reads a superpoint file (any integer id per point) and groups the cloud
/// by it.
pub fn read_superpoints<T: Scalar>(path: &Path, cloud: &PointCloud<T>) -> Result<Vec<Superpoint<T>>> {
    let ids: Vec<i64> = parse_labels(&super::read_string(path)?, path)?;
    if ids.len() != cloud.len() {
        return Err(Error::format(path, format!("{} ids for {} points", ids.len(), cloud.len())));
    }
    Ok(crate::superpoint::superpoints_from_labels(cloud, &ids))
}
