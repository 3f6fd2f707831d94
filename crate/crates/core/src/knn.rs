//! Exact k-nearest-neighbour search over 3-D points with a static kd-tree.
//!
//! Results are ordered by `(squared distance, point index)`, so equal-distance
//! neighbours resolve deterministically.

use crate::scalar::{Scalar, Vec3};

const LEAF_SIZE: usize = 16;

enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

pub struct KdTree<'a, T: Scalar> {
    points: &'a [Vec3<T>],
    perm: Vec<u32>,
    nodes: Vec<Node<T>>,
}

impl<'a, T: Scalar> KdTree<'a, T> {
    pub fn new(points: &'a [Vec3<T>]) -> Self {
        let mut tree = Self { points, perm: (0..points.len() as u32).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let mut lo = self.points[self.perm[start] as usize];
        let mut hi = lo;
        for &i in &self.perm[start..end] {
            let p = self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
            .unwrap();
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a as usize][axis].partial_cmp(&pts[b as usize][axis]).unwrap().then(a.cmp(&b))
        });
        let value = pts[self.perm[mid] as usize][axis];
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[slot] = Node::Split { axis, value, left, right };
        slot
    }

    /// The `k` nearest neighbours of `query`, skipping index `exclude`.
    pub fn knn(&self, query: &Vec3<T>, k: usize, exclude: Option<u32>) -> Vec<(T, u32)> {
        let mut best: Vec<(T, u32)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, exclude, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &Vec3<T>, k: usize, exclude: Option<u32>, best: &mut Vec<(T, u32)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let p = &self.points[i as usize];
                    let d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
                    insert_bounded(best, k, (d2, i));
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}

fn key_less<T: Scalar>(a: &(T, u32), b: &(T, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn insert_bounded<T: Scalar>(best: &mut Vec<(T, u32)>, k: usize, cand: (T, u32)) {
    if best.len() == k && !key_less(&cand, &best[k - 1]) {
        return;
    }
    let pos = best.iter().position(|e| key_less(&cand, e)).unwrap_or(best.len());
    best.insert(pos, cand);
    best.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vec3<f64>], q: usize, k: usize) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != q)
            .map(|(i, p)| {
                let d = (0..3).map(|a| (p[a] - points[q][a]).powi(2)).sum::<f64>();
                (d, i as u32)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|e| e.1).collect()
    }

    proptest! {
        #[test]
        fn matches_brute_force(pts in proptest::collection::vec((-5i32..5, -5i32..5, -5i32..5), 2..120), k in 1usize..10) {
            // integer lattice coordinates produce plenty of exact distance ties
            let points: Vec<Vec3<f64>> = pts.iter().map(|&(x, y, z)| [x as f64 * 0.5, y as f64 * 0.5, z as f64 * 0.5]).collect();
            let tree = KdTree::new(&points);
            let k = k.min(points.len() - 1);
            for q in 0..points.len() {
                let got: Vec<u32> = tree.knn(&points[q], k, Some(q as u32)).into_iter().map(|e| e.1).collect();
                prop_assert_eq!(got, brute(&points, q, k));
            }
        }
    }
}
