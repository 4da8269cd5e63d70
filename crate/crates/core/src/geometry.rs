//! Planar predicates and transforms.

use crate::scalar::Real;
use crate::types::Point2;

/// Twice the signed area of `abc`; positive when counter-clockwise.
#[inline]
pub fn orient2d<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `abc`.
#[inline]
pub fn incircle<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>, d: Point2<T>) -> T {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) + clift * (adx * bdy - ady * bdx)
}

/// Barycentric coordinates of `p` with respect to `abc`.
///
/// Each coordinate is its own sub-triangle area ratio, so mirror-symmetric
/// configurations give bit-identical coordinates. Their sum is one up to
/// rounding. Returns `None` for a degenerate triangle.
pub fn barycentric<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>, p: Point2<T>) -> Option<[T; 3]> {
    let area = orient2d(a, b, c);
    if area == T::zero() {
        return None;
    }
    let l0 = orient2d(p, b, c) / area;
    let l1 = orient2d(a, p, c) / area;
    let l2 = orient2d(a, b, p) / area;
    Some([l0, l1, l2])
}

/// Circumcenter and squared radius; `None` for collinear input.
pub fn circumcircle<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> Option<(Point2<T>, T)> {
    let d = T::lit(2.0) * orient2d(a, b, c);
    if d == T::zero() {
        return None;
    }
    let (bx, by) = (b.x - a.x, b.y - a.y);
    let (cx, cy) = (c.x - a.x, c.y - a.y);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Some((Point2::new(a.x + ux, a.y + uy), ux * ux + uy * uy))
}

/// `p -> [m00 m01; m10 m11] p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2<T: Real> {
    pub m: [[T; 2]; 2],
    pub t: [T; 2],
}

impl<T: Real> Affine2<T> {
    pub fn identity() -> Self {
        Affine2 {
            m: [[T::one(), T::zero()], [T::zero(), T::one()]],
            t: [T::zero(), T::zero()],
        }
    }

    /// The map sending `from[k]` to `to[k]`; `None` if `from` is degenerate.
    pub fn from_triangles(from: [Point2<T>; 3], to: [Point2<T>; 3]) -> Option<Self> {
        let det = orient2d(from[0], from[1], from[2]);
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let (e1, e2) = (from[1] - from[0], from[2] - from[0]);
        let (f1, f2) = (to[1] - to[0], to[2] - to[0]);
        // M [e1 e2] = [f1 f2]  =>  M = [f1 f2] [e1 e2]^-1
        let inv = [[e2.y / det, -e2.x / det], [-e1.y / det, e1.x / det]];
        let m = [
            [f1.x * inv[0][0] + f2.x * inv[1][0], f1.x * inv[0][1] + f2.x * inv[1][1]],
            [f1.y * inv[0][0] + f2.y * inv[1][0], f1.y * inv[0][1] + f2.y * inv[1][1]],
        ];
        let t = [
            to[0].x - (m[0][0] * from[0].x + m[0][1] * from[0].y),
            to[0].y - (m[1][0] * from[0].x + m[1][1] * from[0].y),
        ];
        Some(Affine2 { m, t })
    }

    /// Rotation by `degrees` about `center` (image axes, y down).
    pub fn rotation_about(center: Point2<T>, degrees: T) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let m = [[c, -s], [s, c]];
        let t = [
            center.x - (c * center.x - s * center.y),
            center.y - (s * center.x + c * center.y),
        ];
        Affine2 { m, t }
    }

    #[inline]
    pub fn apply(&self, p: Point2<T>) -> Point2<T> {
        Point2::new(
            self.m[0][0] * p.x + self.m[0][1] * p.y + self.t[0],
            self.m[1][0] * p.x + self.m[1][1] * p.y + self.t[1],
        )
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0];
        if det == T::zero() {
            return None;
        }
        let m = [
            [self.m[1][1] / det, -self.m[0][1] / det],
            [-self.m[1][0] / det, self.m[0][0] / det],
        ];
        let t = [
            -(m[0][0] * self.t[0] + m[0][1] * self.t[1]),
            -(m[1][0] * self.t[0] + m[1][1] * self.t[1]),
        ];
        Some(Affine2 { m, t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn orientation_sign() {
        assert!(orient2d(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)) > 0.0);
        assert!(orient2d(p(0.0, 0.0), p(0.0, 1.0), p(1.0, 0.0)) < 0.0);
        assert_eq!(orient2d(p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)), 0.0);
    }

    #[test]
    fn incircle_sign() {
        let (a, b, c) = (p(0.0, 0.0), p(2.0, 0.0), p(0.0, 2.0));
        assert!(incircle(a, b, c, p(1.0, 1.0)) > 0.0);
        assert!(incircle(a, b, c, p(3.0, 3.0)) < 0.0);
        assert_eq!(incircle(a, b, c, p(2.0, 2.0)), 0.0);
    }

    #[test]
    fn barycentric_at_vertices_and_centroid() {
        let (a, b, c) = (p(0.0, 0.0), p(3.0, 0.0), p(0.0, 3.0));
        assert_eq!(barycentric(a, b, c, a).unwrap(), [1.0, 0.0, 0.0]);
        let l = barycentric(a, b, c, p(1.0, 1.0)).unwrap();
        for v in l {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(barycentric(a, a, c, b).is_none());
    }

    #[test]
    fn circumcircle_of_right_triangle() {
        let (center, r2) = circumcircle(p(0.0, 0.0), p(2.0, 0.0), p(0.0, 2.0)).unwrap();
        assert_eq!(center, p(1.0, 1.0));
        assert!((r2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn affine_maps_triangle_vertices() {
        let from = [p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)];
        let to = [p(2.0, 3.0), p(4.0, 3.0), p(2.0, 6.0)];
        let a = Affine2::from_triangles(from, to).unwrap();
        for k in 0..3 {
            let q = a.apply(from[k]);
            assert!(q.dist(to[k]) < 1e-12);
        }
        let inv = a.inverse().unwrap();
        assert!(inv.apply(to[1]).dist(from[1]) < 1e-12);
    }

    #[test]
    fn rotation_about_center() {
        let r = Affine2::rotation_about(p(1.0, 1.0), 90.0);
        let q = r.apply(p(2.0, 1.0));
        assert!(q.dist(p(1.0, 2.0)) < 1e-12);
    }
}
