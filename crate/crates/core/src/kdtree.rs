//! Incremental 2-d k-d tree for fixed-radius neighbour queries.

use crate::scalar::Real;
use crate::types::Point2;

#[derive(Debug, Clone)]
struct Node<T: Real> {
    point: Point2<T>,
    id: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Points are split alternately on x (even depth) and y (odd depth).
#[derive(Debug, Clone, Default)]
pub struct KdTree2<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> KdTree2<T> {
    pub fn new() -> Self {
        KdTree2 { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn key(p: Point2<T>, depth: usize) -> T {
        if depth % 2 == 0 {
            p.x
        } else {
            p.y
        }
    }

    pub fn insert(&mut self, point: Point2<T>, id: usize) {
        let new = self.nodes.len();
        self.nodes.push(Node {
            point,
            id,
            left: None,
            right: None,
        });
        if new == 0 {
            return;
        }
        let mut cur = 0;
        let mut depth = 0;
        loop {
            let go_left = Self::key(point, depth) < Self::key(self.nodes[cur].point, depth);
            let slot = if go_left {
                &mut self.nodes[cur].left
            } else {
                &mut self.nodes[cur].right
            };
            match *slot {
                Some(next) => {
                    cur = next;
                    depth += 1;
                }
                None => {
                    *slot = Some(new);
                    return;
                }
            }
        }
    }

    /// Ids of all points with Euclidean distance `<= radius` from `q`, sorted.
    pub fn within(&self, q: Point2<T>, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((ni, depth)) = stack.pop() {
            let node = &self.nodes[ni];
            let (dx, dy) = (node.point.x - q.x, node.point.y - q.y);
            if dx * dx + dy * dy <= r2 {
                out.push(node.id);
            }
            let diff = Self::key(q, depth) - Self::key(node.point, depth);
            let (near, far) = if diff < T::zero() {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            if let Some(n) = near {
                stack.push((n, depth + 1));
            }
            if diff.abs() <= radius {
                if let Some(f) = far {
                    stack.push((f, depth + 1));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn any_within(&self, q: Point2<T>, radius: T) -> bool {
        !self.within(q, radius).is_empty()
    }

    /// Id and distance of the nearest point.
    pub fn nearest(&self, q: Point2<T>) -> Option<(usize, T)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, T)> = None;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((ni, depth)) = stack.pop() {
            let node = &self.nodes[ni];
            let d = node.point.dist(q);
            if best.is_none_or(|(bid, bd)| d < bd || (d == bd && node.id < bid)) {
                best = Some((node.id, d));
            }
            let diff = Self::key(q, depth) - Self::key(node.point, depth);
            let (near, far) = if diff < T::zero() {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            if let Some(f) = far {
                if best.is_none_or(|(_, bd)| diff.abs() <= bd) {
                    stack.push((f, depth + 1));
                }
            }
            if let Some(n) = near {
                stack.push((n, depth + 1));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn radius_query_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point2<f64>> = (0..300)
            .map(|_| Point2::new(rng.random_range(-75.0..75.0), rng.random_range(-75.0..75.0)))
            .collect();
        let mut tree = KdTree2::new();
        for (i, &p) in pts.iter().enumerate() {
            tree.insert(p, i);
        }
        for _ in 0..100 {
            let q = Point2::new(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0));
            let r = rng.random_range(0.0..20.0);
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].dist(q) <= r).collect();
            assert_eq!(tree.within(q, r), brute);
            let (nid, nd) = tree.nearest(q).unwrap();
            let bd = pts.iter().map(|p| p.dist(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(nd, bd);
            assert_eq!(pts[nid].dist(q), bd);
        }
    }

    #[test]
    fn empty_tree() {
        let t = KdTree2::<f64>::new();
        assert!(!t.any_within(Point2::new(0.0, 0.0), 1.0));
        assert!(t.nearest(Point2::new(0.0, 0.0)).is_none());
    }
}
