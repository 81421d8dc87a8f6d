//! Static kd-tree over the node cloud for radius and k-nearest-neighbor
//! queries. Ties in distance are broken toward the smaller node index so
//! query results are deterministic.

use crate::point::Point;
use crate::scalar::Real;
use std::collections::BinaryHeap;

pub struct KdTree<T> {
    pts: Vec<Point<T>>,
    ids: Vec<u32>,
    dim: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate<T> {
    d2: T,
    id: u32,
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Finite distances by construction. Larger distance is "greater";
        // on equal distance the larger id is "greater", so the max-heap
        // evicts larger ids first and keeps the smaller-index neighbor.
        self.d2
            .partial_cmp(&other.d2)
            .expect("finite distance")
            .then(self.id.cmp(&other.id))
    }
}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Point<T>], dim: usize) -> Self {
        let mut pts = points.to_vec();
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        if !pts.is_empty() {
            Self::split(&mut pts, &mut ids, 0, dim);
        }
        KdTree { pts, ids, dim }
    }

    fn split(pts: &mut [Point<T>], ids: &mut [u32], depth: usize, dim: usize) {
        let n = pts.len();
        if n <= 1 {
            return;
        }
        let axis = depth % dim;
        let mid = n / 2;
        // Co-sort ids with points; order by (coordinate, id) so duplicate
        // coordinates still partition deterministically.
        let mut order: Vec<usize> = (0..n).collect();
        order.select_nth_unstable_by(mid, |&a, &b| {
            pts[a]
                .coord(axis)
                .partial_cmp(&pts[b].coord(axis))
                .expect("finite coordinate")
                .then(ids[a].cmp(&ids[b]))
        });
        apply_permutation(pts, ids, &order);
        let (lo_p, rest_p) = pts.split_at_mut(mid);
        let (lo_i, rest_i) = ids.split_at_mut(mid);
        Self::split(lo_p, lo_i, depth + 1, dim);
        Self::split(&mut rest_p[1..], &mut rest_i[1..], depth + 1, dim);
    }

    /// Indices of all points with squared distance to `q` at most `r2`,
    /// sorted ascending by node index.
    pub fn within_radius2(&self, q: &Point<T>, r2: T) -> Vec<u32> {
        let mut out = Vec::new();
        if !self.pts.is_empty() {
            self.radius_rec(q, r2, 0, self.pts.len(), 0, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, q: &Point<T>, r2: T, lo: usize, hi: usize, depth: usize, out: &mut Vec<u32>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.pts[mid];
        if q.dist2(p) <= r2 {
            out.push(self.ids[mid]);
        }
        let axis = depth % self.dim;
        let delta = q.coord(axis) - p.coord(axis);
        let (near_lo, near_hi, far_lo, far_hi) = if delta < T::zero() {
            (lo, mid, mid + 1, hi)
        } else {
            (mid + 1, hi, lo, mid)
        };
        self.radius_rec(q, r2, near_lo, near_hi, depth + 1, out);
        if delta * delta <= r2 {
            self.radius_rec(q, r2, far_lo, far_hi, depth + 1, out);
        }
    }

    /// The `k` nearest points to `q` (including an exact-match point), as
    /// (index, squared distance) pairs sorted ascending by node index.
    pub fn knn(&self, q: &Point<T>, k: usize) -> Vec<(u32, T)> {
        assert!(k >= 1 && k <= self.pts.len(), "k out of range");
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(q, k, 0, self.pts.len(), 0, &mut heap);
        let mut out: Vec<(u32, T)> = heap.into_iter().map(|c| (c.id, c.d2)).collect();
        out.sort_unstable_by_key(|&(id, _)| id);
        out
    }

    fn knn_rec(&self, q: &Point<T>, k: usize, lo: usize, hi: usize, depth: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.pts[mid];
        let cand = Candidate { d2: q.dist2(p), id: self.ids[mid] };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("non-empty heap") {
            heap.push(cand);
            heap.pop();
        }
        let axis = depth % self.dim;
        let delta = q.coord(axis) - p.coord(axis);
        let (near_lo, near_hi, far_lo, far_hi) = if delta < T::zero() {
            (lo, mid, mid + 1, hi)
        } else {
            (mid + 1, hi, lo, mid)
        };
        self.knn_rec(q, k, near_lo, near_hi, depth + 1, heap);
        let must_cross = heap.len() < k || {
            let worst = heap.peek().expect("non-empty heap");
            delta * delta <= worst.d2
        };
        if must_cross {
            self.knn_rec(q, k, far_lo, far_hi, depth + 1, heap);
        }
    }
}

fn apply_permutation<T: Copy>(pts: &mut [Point<T>], ids: &mut [u32], order: &[usize]) {
    let new_pts: Vec<Point<T>> = order.iter().map(|&i| pts[i]).collect();
    let new_ids: Vec<u32> = order.iter().map(|&i| ids[i]).collect();
    pts.copy_from_slice(&new_pts);
    ids.copy_from_slice(&new_ids);
}
