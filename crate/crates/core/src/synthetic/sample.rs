//! Jittered-grid surface sampling of primitives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Primitive;
use crate::scalar::{cross3, norm3, Scalar, Vec3};

fn cells<T: Scalar>(length: T, density_sqrt: T) -> usize {
    (length * density_sqrt).ceil().to_usize().unwrap_or(1).max(1)
}

fn unit<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    T::lit(rng.random::<f64>())
}

fn add<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale<T: Scalar>(a: Vec3<T>, s: T) -> Vec3<T> {
    a.map(|c| c * s)
}

/// Parallelogram `origin + a e1 + b e2`, a,b in [0,1].
fn rect<T: Scalar>(
    origin: Vec3<T>,
    e1: Vec3<T>,
    e2: Vec3<T>,
    normal: Vec3<T>,
    ds: T,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(Vec3<T>, Vec3<T>)>,
) {
    let n1 = cells(norm3(&e1), ds);
    let n2 = cells(norm3(&e2), ds);
    for i in 0..n1 {
        for j in 0..n2 {
            let a = (T::from_count(i) + unit(rng)) / T::from_count(n1);
            let b = (T::from_count(j) + unit(rng)) / T::from_count(n2);
            let p = [0, 1, 2].map(|k| origin[k] + a * e1[k] + b * e2[k]);
            out.push((p, normal));
        }
    }
}

/// Points and unit normals on the primitive's sampled surfaces.
pub(crate) fn sample_primitive<T: Scalar>(prim: &Primitive<T>, density: T, rng: &mut ChaCha8Rng) -> Vec<(Vec3<T>, Vec3<T>)> {
    let ds = density.sqrt();
    let two = T::lit(2.0);
    let mut out = Vec::new();
    match *prim {
        Primitive::Box { center: c, size, yaw } => {
            let (s, co) = yaw.sin_cos();
            let ex = [co, s, T::zero()];
            let ey = [-s, co, T::zero()];
            let ez = [T::zero(), T::zero(), T::one()];
            let (hx, hy, hz) = (size[0] / two, size[1] / two, size[2] / two);
            let at = |a: T, b: T, h: T| add(add(add(c, scale(ex, a)), scale(ey, b)), scale(ez, h));
            let neg = |v: Vec3<T>| v.map(|x| -x);
            rect(at(-hx, -hy, hz), scale(ex, two * hx), scale(ey, two * hy), ez, ds, rng, &mut out);
            rect(at(hx, -hy, -hz), scale(ey, two * hy), scale(ez, two * hz), ex, ds, rng, &mut out);
            rect(at(-hx, -hy, -hz), scale(ey, two * hy), scale(ez, two * hz), neg(ex), ds, rng, &mut out);
            rect(at(-hx, hy, -hz), scale(ex, two * hx), scale(ez, two * hz), ey, ds, rng, &mut out);
            rect(at(-hx, -hy, -hz), scale(ex, two * hx), scale(ez, two * hz), neg(ey), ds, rng, &mut out);
        }
        Primitive::Cylinder { center: c, radius, height } => {
            let tau = T::lit(std::f64::consts::TAU);
            let nt = cells(tau * radius, ds);
            let nh = cells(height, ds);
            for i in 0..nt {
                for j in 0..nh {
                    let th = tau * (T::from_count(i) + unit(rng)) / T::from_count(nt);
                    let z = c[2] - height / two + height * (T::from_count(j) + unit(rng)) / T::from_count(nh);
                    let (s, co) = th.sin_cos();
                    out.push(([c[0] + radius * co, c[1] + radius * s, z], [co, s, T::zero()]));
                }
            }
            let n = cells(two * radius, ds);
            let top = c[2] + height / two;
            for i in 0..n {
                for j in 0..n {
                    let x = -radius + two * radius * (T::from_count(i) + unit(rng)) / T::from_count(n);
                    let y = -radius + two * radius * (T::from_count(j) + unit(rng)) / T::from_count(n);
                    if x * x + y * y <= radius * radius {
                        out.push(([c[0] + x, c[1] + y, top], [T::zero(), T::zero(), T::one()]));
                    }
                }
            }
        }
        Primitive::Plane { center: c, u, v } => {
            let n = cross3(&u, &v);
            let nn = norm3(&n);
            let normal = n.map(|x| x / nn);
            let origin = [0, 1, 2].map(|k| c[k] - u[k] - v[k]);
            rect(origin, scale(u, two), scale(v, two), normal, ds, rng, &mut out);
        }
    }
    out
}

/// True when `p` lies strictly inside the primitive's volume.
pub(crate) fn contains<T: Scalar>(prim: &Primitive<T>, p: &Vec3<T>) -> bool {
    let two = T::lit(2.0);
    match *prim {
        Primitive::Box { center: c, size, yaw } => {
            let (s, co) = yaw.sin_cos();
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let lx = d[0] * co + d[1] * s;
            let ly = -d[0] * s + d[1] * co;
            lx.abs() < size[0] / two && ly.abs() < size[1] / two && d[2].abs() < size[2] / two
        }
        Primitive::Cylinder { center: c, radius, height } => {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            dx * dx + dy * dy < radius * radius && (p[2] - c[2]).abs() < height / two
        }
        Primitive::Plane { .. } => false,
    }
}

const SHRINK: f64 = 1e-6;

/// Parameter interval of the segment `a + t d` inside the slab `|x| < h`.
fn slab<T: Scalar>(a: T, d: T, h: T, lo: &mut T, hi: &mut T) -> bool {
    if d.abs() <= T::lit(1e-15) {
        return a.abs() < h;
    }
    let (mut t0, mut t1) = ((-h - a) / d, (h - a) / d);
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    *lo = lo.max(t0);
    *hi = hi.min(t1);
    lo < hi
}

/// True when the open segment from `from` to `to` passes through the
/// primitive's interior (or, for a plane, crosses it).
pub(crate) fn blocks<T: Scalar>(prim: &Primitive<T>, from: &Vec3<T>, to: &Vec3<T>) -> bool {
    let two = T::lit(2.0);
    let eps = T::lit(SHRINK);
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let len = norm3(&d);
    if len <= T::zero() {
        return false;
    }
    // stop just short of the target so its own surface does not count
    let end = T::one() - eps / len;
    match *prim {
        Primitive::Box { center: c, size, yaw } => {
            let (s, co) = yaw.sin_cos();
            let local = |v: [T; 3]| [v[0] * co + v[1] * s, -v[0] * s + v[1] * co, v[2]];
            let a = local([from[0] - c[0], from[1] - c[1], from[2] - c[2]]);
            let dl = local(d);
            let (mut lo, mut hi) = (T::zero(), end);
            (0..3).all(|k| slab(a[k], dl[k], size[k] / two - eps, &mut lo, &mut hi))
        }
        Primitive::Cylinder { center: c, radius, height } => {
            let a = [from[0] - c[0], from[1] - c[1], from[2] - c[2]];
            let (mut lo, mut hi) = (T::zero(), end);
            if !slab(a[2], d[2], height / two - eps, &mut lo, &mut hi) {
                return false;
            }
            let r = radius - eps;
            let qa = d[0] * d[0] + d[1] * d[1];
            let qb = two * (a[0] * d[0] + a[1] * d[1]);
            let qc = a[0] * a[0] + a[1] * a[1] - r * r;
            if qa <= T::lit(1e-15) {
                return qc < T::zero();
            }
            let disc = qb * qb - T::lit(4.0) * qa * qc;
            if disc <= T::zero() {
                return false;
            }
            let sq = disc.sqrt();
            let t0 = (-qb - sq) / (two * qa);
            let t1 = (-qb + sq) / (two * qa);
            lo.max(t0) < hi.min(t1)
        }
        Primitive::Plane { center: c, u, v } => {
            let n = cross3(&u, &v);
            let denom = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
            if denom.abs() <= T::lit(1e-15) {
                return false;
            }
            let w = [c[0] - from[0], c[1] - from[1], c[2] - from[2]];
            let t = (n[0] * w[0] + n[1] * w[1] + n[2] * w[2]) / denom;
            if !(t > eps / len && t < end) {
                return false;
            }
            let hit = [from[0] + t * d[0] - c[0], from[1] + t * d[1] - c[1], from[2] + t * d[2] - c[2]];
            let uu = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
            let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let su = (hit[0] * u[0] + hit[1] * u[1] + hit[2] * u[2]) / uu;
            let sv = (hit[0] * v[0] + hit[1] * v[1] + hit[2] * v[2]) / vv;
            su.abs() <= T::one() && sv.abs() <= T::one()
        }
    }
}
