//! Scalar abstraction shared by every numeric stage.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the pipeline is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal, panicking only if the value is unrepresentable.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Vec3<T> = [T; 3];

#[inline]
pub(crate) fn sub3<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot3<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3<T: Scalar>(a: &Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

#[inline]
pub(crate) fn dist3<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    norm3(&sub3(a, b))
}

#[inline]
pub(crate) fn cross3<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Cosine similarity of two non-negative sparse count vectors given as
/// label-sorted `(label, value)` pairs. `None` when either vector is zero.
pub(crate) fn sparse_cosine<K: Ord + Copy, T: Scalar>(a: &[(K, T)], b: &[(K, T)]) -> Option<T> {
    let na: T = a.iter().map(|&(_, v)| v * v).sum();
    let nb: T = b.iter().map(|&(_, v)| v * v).sum();
    if na <= T::zero() || nb <= T::zero() {
        return None;
    }
    let mut dot = T::zero();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    // sqrt of the product keeps identical vectors at exactly 1
    let c = dot / (na * nb).sqrt();
    Some(c.max(T::zero()).min(T::one()))
}
