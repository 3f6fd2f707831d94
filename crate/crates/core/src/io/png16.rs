//! 16-bit grayscale PNG images: depth in millimetres and label images.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::mask_store::SegmentationMap2D;
use crate::scalar::Scalar;
use crate::scene::DepthImage;

pub fn encode_u16(width: u32, height: u32, data: &[u16]) -> Result<Vec<u8>> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width, height, data.to_vec())
        .ok_or_else(|| Error::DimensionMismatch(format!("{} values for {width}x{height}", data.len())))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidParameter(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// Decodes a PNG that must be single-channel 16-bit.
pub fn decode_u16(bytes: &[u8], path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("cannot decode PNG: {e}")))?;
    match img {
        DynamicImage::ImageLuma16(buf) => Ok((buf.width(), buf.height(), buf.into_raw())),
        other => Err(Error::format(path, format!("expected 16-bit grayscale PNG, found {:?}", other.color()))),
    }
}

/// Depth in millimetres, rounded; 0 stays "no measurement".
pub fn encode_depth<T: Scalar>(depth: &DepthImage<T>) -> Result<Vec<u8>> {
    let mut mm = Vec::with_capacity(depth.data.len());
    for (i, d) in depth.data.iter().enumerate() {
        let v = (d.as_f64() * 1000.0).round();
        if !(0.0..=u16::MAX as f64).contains(&v) {
            return Err(Error::InvalidParameter(format!("depth {d} at pixel {i} does not fit 16-bit millimetres")));
        }
        mm.push(v as u16);
    }
    encode_u16(depth.width, depth.height, &mm)
}

pub fn decode_depth<T: Scalar>(bytes: &[u8], path: &Path) -> Result<DepthImage<T>> {
    let (width, height, mm) = decode_u16(bytes, path)?;
    let data = mm.into_iter().map(|v| T::lit(v as f64 / 1000.0)).collect();
    Ok(DepthImage { width, height, data })
}

pub fn write_depth<T: Scalar>(path: &Path, depth: &DepthImage<T>) -> Result<()> {
    super::write_bytes(path, &encode_depth(depth)?)
}

pub fn read_depth<T: Scalar>(path: &Path) -> Result<DepthImage<T>> {
    decode_depth(&super::read_bytes(path)?, path)
}

/// Label image with value `label + 1`, 0 for background.
pub fn encode_label_map(map: &SegmentationMap2D) -> Result<Vec<u8>> {
    let mut px = Vec::with_capacity(map.labels.len());
    for &l in &map.labels {
        let v = l + 1;
        if !(0..=u16::MAX as i32).contains(&v) {
            return Err(Error::InvalidParameter(format!("label {l} does not fit a 16-bit image")));
        }
        px.push(v as u16);
    }
    encode_u16(map.width, map.height, &px)
}

/// Labels of a label image (`value - 1`).
pub fn decode_label_map(bytes: &[u8], path: &Path) -> Result<(u32, u32, Vec<i32>)> {
    let (w, h, px) = decode_u16(bytes, path)?;
    Ok((w, h, px.into_iter().map(|v| v as i32 - 1).collect()))
}
