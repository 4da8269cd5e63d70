//! Incremental Bowyer–Watson Delaunay triangulation inside a rectangle.
//!
//! The four rectangle corners seed the mesh, so every inserted point lies
//! in the convex hull and no super-triangle is needed. Points on the
//! rectangle boundary split the hull edge they lie on.
//!
//! A point exactly on a circumcircle is treated as outside it, which keeps
//! cocircular configurations deterministic (the first valid diagonal
//! survives).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{incircle, orient2d};
use crate::scalar::Real;
use crate::types::Point2;

#[derive(Debug, Clone)]
pub struct Triangulation<T: Real> {
    points: Vec<Point2<T>>,
    triangles: Vec<[usize; 3]>,
    skipped: Vec<usize>,
}

impl<T: Real> Triangulation<T> {
    /// Triangulates `inner` together with the corners of the rectangle
    /// `[min, max]`.
    ///
    /// Vertices `0..4` are the corners (counter-clockwise from `min`);
    /// `inner[i]` becomes vertex `4 + i`. Exact duplicates of an earlier
    /// vertex are left unreferenced and reported by [`Self::skipped`].
    pub fn in_rectangle(min: Point2<T>, max: Point2<T>, inner: &[Point2<T>]) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y) {
            return Err(Error::invalid("triangulation rectangle is empty"));
        }
        let mut points = vec![min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)];
        points.reserve(inner.len());
        let mut tri = Triangulation {
            points,
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            skipped: Vec::new(),
        };
        for &p in inner {
            if !p.is_finite() {
                return Err(Error::NonFinite("triangulation vertex"));
            }
            if p.x < min.x || p.x > max.x || p.y < min.y || p.y > max.y {
                return Err(Error::invalid(format!(
                    "point ({}, {}) outside the triangulation rectangle",
                    p.x, p.y
                )));
            }
            tri.insert(p);
        }
        tri.canonicalize();
        Ok(tri)
    }

    fn insert(&mut self, p: Point2<T>) {
        let id = self.points.len();
        self.points.push(p);
        if self.points[..id].iter().any(|&q| q == p) {
            self.skipped.push(id);
            return;
        }

        let Some(seed) = self.triangles.iter().position(|t| self.contains(t, p)) else {
            self.skipped.push(id);
            return;
        };

        // Cavity: triangles whose circumcircle strictly contains p, grown
        // from the containing triangle through shared edges.
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.triangles.len() * 3);
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                edge_owner.insert((t[k], t[(k + 1) % 3]), ti);
            }
        }
        let mut bad = vec![false; self.triangles.len()];
        bad[seed] = true;
        let mut stack = vec![seed];
        while let Some(ti) = stack.pop() {
            let t = self.triangles[ti];
            for k in 0..3 {
                if let Some(&nb) = edge_owner.get(&(t[(k + 1) % 3], t[k])) {
                    if !bad[nb] && self.in_circumcircle(&self.triangles[nb], p) {
                        bad[nb] = true;
                        stack.push(nb);
                    }
                }
            }
        }

        let mut boundary = Vec::new();
        for (t, _) in self.triangles.iter().zip(&bad).filter(|(_, &b)| b) {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let shared = edge_owner.get(&(b, a)).is_some_and(|&nb| bad[nb]);
                if !shared {
                    boundary.push((a, b));
                }
            }
        }

        let mut kept: Vec<[usize; 3]> = self
            .triangles
            .iter()
            .zip(&bad)
            .filter(|(_, &b)| !b)
            .map(|(t, _)| *t)
            .collect();
        for (a, b) in boundary {
            // p on a hull edge: that edge is split, not fanned
            if orient2d(self.points[a], self.points[b], p) > T::zero() {
                kept.push([a, b, id]);
            }
        }
        self.triangles = kept;
    }

    fn contains(&self, t: &[usize; 3], p: Point2<T>) -> bool {
        let [a, b, c] = t.map(|i| self.points[i]);
        orient2d(a, b, p) >= T::zero() && orient2d(b, c, p) >= T::zero() && orient2d(c, a, p) >= T::zero()
    }

    fn in_circumcircle(&self, t: &[usize; 3], p: Point2<T>) -> bool {
        let [a, b, c] = t.map(|i| self.points[i]);
        incircle(a, b, c, p) > T::zero()
    }

    /// Rotates each triangle to start at its smallest vertex id and sorts
    /// the list, so triangle ids do not depend on insertion history.
    fn canonicalize(&mut self) {
        for t in &mut self.triangles {
            let m = (0..3).min_by_key(|&k| t[k]).unwrap();
            t.rotate_left(m);
        }
        self.triangles.sort_unstable();
    }

    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    /// Counter-clockwise index triples in canonical order.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Vertex ids that were not inserted (exact duplicates).
    pub fn skipped(&self) -> &[usize] {
        &self.skipped
    }

    pub fn vertex(&self, i: usize) -> Point2<T> {
        self.points[i]
    }

    pub fn triangle_points(&self, ti: usize) -> [Point2<T>; 3] {
        self.triangles[ti].map(|i| self.points[i])
    }

    /// First triangle (canonical order) containing `p`, by orientation tests.
    pub fn locate(&self, p: Point2<T>) -> Option<usize> {
        self.triangles.iter().position(|t| self.contains(t, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn square(inner: &[Point2<f64>]) -> Triangulation<f64> {
        Triangulation::in_rectangle(p(-75.0, -75.0), p(75.0, 75.0), inner).unwrap()
    }

    #[test]
    fn empty_rectangle_has_two_triangles() {
        assert_eq!(square(&[]).triangles().len(), 2);
    }

    #[test]
    fn single_interior_point_fans_four_triangles() {
        let t = square(&[p(3.0, -7.0)]);
        assert_eq!(t.triangles().len(), 4);
        assert!(t.triangles().iter().all(|tri| tri.contains(&4)));
    }

    #[test]
    fn all_triangles_counter_clockwise() {
        let pts: Vec<_> = (0..20)
            .map(|i| p((i * 37 % 140) as f64 - 70.0, (i * 53 % 140) as f64 - 70.0))
            .collect();
        let t = square(&pts);
        for tri in t.triangles() {
            let [a, b, c] = tri.map(|i| t.vertex(i));
            assert!(orient2d(a, b, c) > 0.0);
        }
        // Euler: 2n - h - 2 triangles with a 4-vertex hull
        let n = 4 + pts.len() - t.skipped().len();
        assert_eq!(t.triangles().len(), 2 * n - 4 - 2);
    }

    #[test]
    fn duplicates_are_skipped() {
        let t = square(&[p(1.0, 1.0), p(1.0, 1.0)]);
        assert_eq!(t.skipped(), &[5]);
        assert_eq!(t.triangles().len(), 4);
    }

    #[test]
    fn point_on_hull_edge_splits_it() {
        let t = Triangulation::in_rectangle(p(0.0, 0.0), p(4.0, 2.0), &[p(2.0, 0.0)]).unwrap();
        assert_eq!(t.triangles().len(), 3);
        let area: f64 = (0..3)
            .map(|i| {
                let [a, b, c] = t.triangle_points(i);
                orient2d(a, b, c) / 2.0
            })
            .sum();
        assert!((area - 8.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_points_outside() {
        assert!(Triangulation::in_rectangle(p(0.0, 0.0), p(1.0, 1.0), &[p(2.0, 0.5)]).is_err());
    }
}
