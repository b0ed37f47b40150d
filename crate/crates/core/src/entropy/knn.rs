//! Exact k-nearest-neighbor distances via a static k-d tree.
//!
//! Built once over an immutable point set; queries are read-only and safe
//! to run in parallel. Median splits on cycling axes keep the tree balanced
//! regardless of input order, and distances are a multiset property of the
//! data, so results do not depend on traversal order.

/// Flat point storage plus a median-split tree over point indices.
pub struct KdTree {
    dim: usize,
    pts: Vec<f64>,
    nodes: Vec<Node>,
    root: i32,
}

struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

impl KdTree {
    pub fn build(dim: usize, pts: Vec<f64>) -> Self {
        assert!(dim > 0 && pts.len() % dim == 0, "ragged point buffer");
        let n = pts.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut tree = KdTree {
            dim,
            pts,
            nodes: Vec::with_capacity(n),
            root: -1,
        };
        tree.root = tree.build_node(&mut order, 0);
        tree
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    fn coord(&self, point: u32, axis: usize) -> f64 {
        self.pts[point as usize * self.dim + axis]
    }

    fn build_node(&mut self, order: &mut [u32], depth: usize) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = depth % self.dim;
        let mid = order.len() / 2;
        let pts = &self.pts;
        let dim = self.dim;
        order.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize * dim + axis].total_cmp(&pts[b as usize * dim + axis])
        });
        let point = order[mid];
        let id = self.nodes.len() as i32;
        self.nodes.push(Node {
            point,
            axis: axis as u8,
            left: -1,
            right: -1,
        });
        let (lo, hi) = order.split_at_mut(mid);
        let left = self.build_node(lo, depth + 1);
        let right = self.build_node(&mut hi[1..], depth + 1);
        self.nodes[id as usize].left = left;
        self.nodes[id as usize].right = right;
        id
    }

    /// Distance from point `query` (a member of the set) to its `k`-th
    /// nearest other point. Duplicates legitimately give zero.
    pub fn kth_neighbor_distance(&self, query: usize, k: usize) -> f64 {
        assert!(k >= 1 && self.len() > k, "need more points than neighbors");
        let q = &self.pts[query * self.dim..(query + 1) * self.dim];
        let mut best = Best::new(k);
        self.search(self.root, q, query as u32, &mut best);
        best.worst().sqrt()
    }

    fn search(&self, node: i32, q: &[f64], exclude: u32, best: &mut Best) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        if n.point != exclude {
            let mut d2 = 0.0;
            let base = n.point as usize * self.dim;
            for (a, qa) in q.iter().enumerate() {
                let d = self.pts[base + a] - qa;
                d2 += d * d;
            }
            best.offer(d2);
        }
        let axis = n.axis as usize;
        let delta = q[axis] - self.coord(n.point, axis);
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, exclude, best);
        if delta * delta < best.worst() {
            self.search(far, q, exclude, best);
        }
    }
}

/// The k smallest squared distances seen so far, kept sorted; k stays small
/// (single digits), so insertion into a short array beats a heap.
struct Best {
    dists: Vec<f64>,
    cap: usize,
}

impl Best {
    fn new(cap: usize) -> Self {
        Best {
            dists: Vec::with_capacity(cap),
            cap,
        }
    }

    fn offer(&mut self, d2: f64) {
        if self.dists.len() < self.cap {
            let pos = self.dists.partition_point(|&x| x < d2);
            self.dists.insert(pos, d2);
        } else if d2 < self.dists[self.cap - 1] {
            let pos = self.dists.partition_point(|&x| x < d2);
            self.dists.insert(pos, d2);
            self.dists.pop();
        }
    }

    /// Current k-th distance, or infinity until k candidates are in.
    fn worst(&self) -> f64 {
        if self.dists.len() < self.cap {
            f64::INFINITY
        } else {
            self.dists[self.cap - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute_force_kth(dim: usize, pts: &[f64], query: usize, k: usize) -> f64 {
        let n = pts.len() / dim;
        let q = &pts[query * dim..(query + 1) * dim];
        let mut dists: Vec<f64> = (0..n)
            .filter(|&i| i != query)
            .map(|i| {
                let p = &pts[i * dim..(i + 1) * dim];
                p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        dists[k - 1].sqrt()
    }

    #[test]
    fn agrees_with_brute_force() {
        let mut rng = crate::rng::stream(11, crate::rng::Stream::Sampling);
        for dim in [1usize, 2, 4] {
            let n = 400;
            let pts: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tree = KdTree::build(dim, pts.clone());
            for query in [0usize, 17, 399] {
                for k in [1usize, 4, 9] {
                    let got = tree.kth_neighbor_distance(query, k);
                    let want = brute_force_kth(dim, &pts, query, k);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.max(1.0),
                        "dim={dim} query={query} k={k}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn duplicates_give_zero_distance() {
        let pts = vec![0.5, 0.5, 0.5, 0.5, 1.0, 1.0];
        let tree = KdTree::build(2, pts);
        assert_eq!(tree.kth_neighbor_distance(0, 1), 0.0);
    }
}
