//! Uncompressed run-length encoding of binary masks.
//!
//! Runs are column-major (down each column, then across) and always start
//! with a run of zeros, which may be empty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

/// Decoded binary mask, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bm = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    bm.set(x, y, true);
                }
            }
        }
        bm
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn intersection_count(&self, other: &Bitmap) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn union_count(&self, other: &Bitmap) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a || **b).count()
    }

    pub fn same_dims(&self, other: &Bitmap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Iterates set pixels as `(x, y)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bb: Option<(u32, u32, u32, u32)> = None;
        for (x, y) in self.pixels() {
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    pub fn encode(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..self.width {
            for y in 0..self.height {
                let b = self.get(x, y);
                if b != current {
                    counts.push(run);
                    run = 0;
                    current = b;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle { size: [self.height, self.width], counts }
    }
}

impl Rle {
    pub fn height(&self) -> u32 {
        self.size[0]
    }

    pub fn width(&self) -> u32 {
        self.size[1]
    }

    /// Total number of bits the runs describe.
    pub fn decoded_len(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Number of foreground pixels (odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn decode(&self) -> Result<Bitmap> {
        let (h, w) = (self.height(), self.width());
        let expected = h as u64 * w as u64;
        if self.decoded_len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "RLE decodes to {} bits, expected {}x{}={}",
                self.decoded_len(),
                h,
                w,
                expected
            )));
        }
        let mut bm = Bitmap::new(w, h);
        let mut pos = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                for k in pos..pos + c as u64 {
                    let x = (k / h as u64) as u32;
                    let y = (k % h as u64) as u32;
                    bm.set(x, y, true);
                }
            }
            pos += c as u64;
        }
        Ok(bm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn column_major_starting_with_zero_run() {
        // 2x3 (h=2, w=3); set pixel (x=0,y=1) and (x=1,y=0)
        let mut bm = Bitmap::new(3, 2);
        bm.set(0, 1, true);
        bm.set(1, 0, true);
        let rle = bm.encode();
        assert_eq!(rle.size, [2, 3]);
        assert_eq!(rle.counts, vec![1, 2, 3]);
        assert_eq!(rle.area(), 2);

        let first_set = Bitmap::from_fn(2, 2, |x, y| x == 0 && y == 0).encode();
        assert_eq!(first_set.counts, vec![0, 1, 3]);
    }

    #[test]
    fn wrong_bit_count_is_rejected() {
        let rle = Rle { size: [2, 2], counts: vec![1, 2] };
        assert!(matches!(rle.decode(), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let bm = Bitmap::from_fn(w, h, |x, y| {
                (seed.rotate_left(x * 7 + y * 13) ^ (x as u64 * 31 + y as u64)) & 1 == 1
            });
            let rle = bm.encode();
            prop_assert_eq!(rle.decoded_len(), (w * h) as u64);
            prop_assert_eq!(rle.area() as usize, bm.count());
            prop_assert_eq!(rle.decode().unwrap(), bm);
        }
    }
}
