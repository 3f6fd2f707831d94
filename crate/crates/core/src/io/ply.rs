//! Binary little-endian PLY point clouds (vertex element only).

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, Vec3};
use crate::scene::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Kind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Kind::I8,
            "uchar" | "uint8" => Kind::U8,
            "short" | "int16" => Kind::I16,
            "ushort" | "uint16" => Kind::U16,
            "int" | "int32" => Kind::I32,
            "uint" | "uint32" => Kind::U32,
            "float" | "float32" => Kind::F32,
            "double" | "float64" => Kind::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Kind::I8 | Kind::U8 => 1,
            Kind::I16 | Kind::U16 => 2,
            Kind::I32 | Kind::U32 | Kind::F32 => 4,
            Kind::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Kind::I8 => b[0] as i8 as f64,
            Kind::U8 => b[0] as f64,
            Kind::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Kind::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Kind::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Kind::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Kind::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Kind::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Kind)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|p| p.1.size()).sum()
    }

    fn offset(&self, name: &str) -> Option<(usize, Kind)> {
        let mut off = 0;
        for (n, k) in &self.props {
            if n == name {
                return Some((off, *k));
            }
            off += k.size();
        }
        None
    }
}

/// Parses a binary little-endian PLY. Positions are required; normals and
/// colours are read when all three components are present.
pub fn parse_ply<T: Scalar>(bytes: &[u8], path: &Path) -> Result<PointCloud<T>> {
    let bad = |m: String| Error::format(path, m);
    let end = find(bytes, b"end_header\n").ok_or_else(|| bad("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let body = &bytes[end + b"end_header\n".len()..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("not a PLY file".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for (no, line) in lines.enumerate() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _] => {
                if *f != "binary_little_endian" {
                    return Err(bad(format!("unsupported PLY format `{f}`")));
                }
                format_ok = true;
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| bad(format!("header line {}: bad element count", no + 2)))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", ..] => {
                let el = elements.last().ok_or_else(|| bad("property before element".into()))?;
                if el.name == "vertex" || !elements.iter().any(|e| e.name == "vertex") {
                    return Err(bad(format!("list property in or before the vertex element ({})", el.name)));
                }
                // later elements are never read
            }
            ["property", ty, name] => {
                let kind = Kind::parse(ty).ok_or_else(|| bad(format!("unknown property type `{ty}`")))?;
                let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                el.props.push((name.to_string(), kind));
            }
            _ => return Err(bad(format!("header line {}: cannot parse `{line}`", no + 2))),
        }
    }
    if !format_ok {
        return Err(bad("missing format line".into()));
    }
    let vi = elements.iter().position(|e| e.name == "vertex").ok_or_else(|| bad("no vertex element".into()))?;
    let skip: usize = elements[..vi].iter().map(|e| e.count * e.stride()).sum();
    let v = &elements[vi];
    let stride = v.stride();
    let need = skip + v.count * stride;
    if body.len() < need {
        return Err(bad(format!("body has {} bytes, vertex data needs {need}", body.len())));
    }
    let field = |names: [&str; 3]| -> Option<[(usize, Kind); 3]> {
        Some([v.offset(names[0])?, v.offset(names[1])?, v.offset(names[2])?])
    };
    let xyz = field(["x", "y", "z"]).ok_or_else(|| bad("vertex lacks x, y or z".into()))?;
    let nrm = field(["nx", "ny", "nz"]);
    let rgb = field(["red", "green", "blue"]);
    let data = &body[skip..need];
    let read3 = |row: &[u8], f: &[(usize, Kind); 3]| f.map(|(o, k)| k.read(&row[o..]));

    let mut positions = Vec::with_capacity(v.count);
    let mut normals = nrm.map(|_| Vec::with_capacity(v.count));
    let mut colors = rgb.map(|_| Vec::with_capacity(v.count));
    for row in data.chunks_exact(stride) {
        positions.push(read3(row, &xyz).map(T::lit));
        if let (Some(n), Some(out)) = (&nrm, normals.as_mut()) {
            out.push(read3(row, n).map(T::lit));
        }
        if let (Some(c), Some(out)) = (&rgb, colors.as_mut()) {
            out.push(read3(row, c).map(|x| x.clamp(0.0, 255.0) as u8));
        }
    }
    Ok(PointCloud { positions, colors, normals })
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub fn read_ply<T: Scalar>(path: &Path) -> Result<PointCloud<T>> {
    parse_ply(&super::read_bytes(path)?, path)
}

/// Encodes positions and normals as float32 and colours as uchar.
pub fn encode_ply<T: Scalar>(cloud: &PointCloud<T>) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", cloud.len());
    header += "property float x\nproperty float y\nproperty float z\n";
    if cloud.colors.is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    if cloud.normals.is_some() {
        header += "property float nx\nproperty float ny\nproperty float nz\n";
    }
    header += "end_header\n";
    let mut out = header.into_bytes();
    let put = |out: &mut Vec<u8>, v: &Vec3<T>| {
        for c in v {
            out.extend_from_slice(&(c.as_f64() as f32).to_le_bytes());
        }
    };
    for i in 0..cloud.len() {
        put(&mut out, &cloud.positions[i]);
        if let Some(c) = &cloud.colors {
            out.extend_from_slice(&c[i]);
        }
        if let Some(n) = &cloud.normals {
            put(&mut out, &n[i]);
        }
    }
    out
}

pub fn write_ply<T: Scalar>(path: &Path, cloud: &PointCloud<T>) -> Result<()> {
    super::write_bytes(path, &encode_ply(cloud))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud<f64> {
        PointCloud {
            positions: vec![[0.5, -1.25, 3.0], [1e-3f32 as f64, 2.0, 0.0]],
            colors: Some(vec![[1, 2, 3], [255, 0, 128]]),
            normals: Some(vec![[0.0, 0.0, 1.0], [0.6, 0.8, 0.0f32 as f64]]),
        }
    }

    #[test]
    fn roundtrip_with_all_attributes() {
        let c = cloud();
        let back: PointCloud<f64> = parse_ply(&encode_ply(&c), Path::new("t.ply")).unwrap();
        assert_eq!(back.positions, c.positions);
        assert_eq!(back.colors, c.colors);
        let n = back.normals.unwrap();
        assert_eq!(n[0], [0.0, 0.0, 1.0]);
        assert_eq!(n[1], [0.6f32 as f64, 0.8f32 as f64, 0.0]);
    }

    #[test]
    fn positions_only_and_f32() {
        let c = PointCloud::<f32>::from_positions(vec![[1.0, 2.0, 3.0]]);
        let back: PointCloud<f32> = parse_ply(&encode_ply(&c), Path::new("t.ply")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn doubles_extra_properties_and_leading_elements() {
        let mut b = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement camera 1\nproperty uchar k\n\
element vertex 1\nproperty double x\nproperty int tag\nproperty double y\nproperty double z\nelement face 0\n\
property list uchar int vertex_indices\nend_header\n"
            .to_vec();
        b.push(7);
        for v in [0.1f64] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&(-5i32).to_le_bytes());
        for v in [0.2f64, 0.3] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let c: PointCloud<f64> = parse_ply(&b, Path::new("t.ply")).unwrap();
        assert_eq!(c.positions, vec![[0.1, 0.2, 0.3]]);
        assert!(c.normals.is_none() && c.colors.is_none());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let p = Path::new("t.ply");
        assert!(parse_ply::<f64>(b"ply\nformat ascii 1.0\nend_header\n", p).is_err());
        assert!(parse_ply::<f64>(b"nope", p).is_err());
        let short = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n\0\0\0\0";
        let err = parse_ply::<f64>(short, p).unwrap_err().to_string();
        assert!(err.contains("t.ply") && err.contains("needs 24"), "{err}");
        let no_z = b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\nend_header\n";
        assert!(parse_ply::<f64>(no_z, p).is_err());
    }
}
