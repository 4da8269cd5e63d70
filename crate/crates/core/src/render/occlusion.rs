//! Random elliptical holes cut into the face region from its border.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::SegMask;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipseOcclusionSpec {
    /// Inclusive range for the number of ellipses.
    pub count: (usize, usize),
    /// Semi-axis range as fractions of the face bounding-box extent.
    pub axis_fraction: (f64, f64),
    pub seed: u64,
}

impl Default for EllipseOcclusionSpec {
    fn default() -> Self {
        EllipseOcclusionSpec {
            count: (1, 3),
            axis_fraction: (0.05, 0.25),
            seed: 0,
        }
    }
}

impl EllipseOcclusionSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.axis_fraction;
        if self.count.0 > self.count.1 || !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "bad ellipse occlusion ranges {:?} {:?}",
                self.count, self.axis_fraction
            )));
        }
        Ok(())
    }
}

/// Sets face pixels inside the sampled ellipses to background. Centers
/// lie on face pixels that touch a non-face pixel or the frame edge.
pub fn occlude_ellipses(mask: &SegMask, spec: &EllipseOcclusionSpec) -> Result<SegMask> {
    spec.validate()?;
    let (w, h) = (mask.width(), mask.height());
    let mut border = Vec::new();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if !mask.is_face(x, y) {
                continue;
            }
            (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            let edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if edge
                || !mask.is_face(x - 1, y)
                || !mask.is_face(x + 1, y)
                || !mask.is_face(x, y - 1)
                || !mask.is_face(x, y + 1)
            {
                border.push((x, y));
            }
        }
    }
    let mut out = mask.clone();
    if border.is_empty() {
        return Ok(out);
    }
    let extent = ((x1 - x0 + 1).max(y1 - y0 + 1)) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = rng.random_range(spec.count.0..=spec.count.1);
    for _ in 0..n {
        let (cx, cy) = border[rng.random_range(0..border.len())];
        let (cx, cy) = (cx as f64 + 0.5, cy as f64 + 0.5);
        let a = extent * rng.random_range(spec.axis_fraction.0..=spec.axis_fraction.1);
        let b = extent * rng.random_range(spec.axis_fraction.0..=spec.axis_fraction.1);
        let (s, c) = rng.random_range(0.0..std::f64::consts::PI).sin_cos();
        let r = a.max(b).ceil() as isize + 1;
        let (xi, yi) = (cx as isize, cy as isize);
        for y in (yi - r).max(0)..(yi + r + 1).min(h as isize) {
            for x in (xi - r).max(0)..(xi + r + 1).min(w as isize) {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 && out.is_face(x as usize, y as usize) {
                    out.set(x as usize, y as usize, SegMask::BACKGROUND);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc() -> SegMask {
        let mut m = SegMask::filled(64, 64, SegMask::HAIR);
        for y in 0..64 {
            for x in 0..64 {
                if ((x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2)).sqrt() < 20.0 {
                    m.set(x, y, SegMask::FACE);
                }
            }
        }
        m
    }

    #[test]
    fn zero_ellipses_is_identity() {
        let spec = EllipseOcclusionSpec {
            count: (0, 0),
            ..Default::default()
        };
        assert_eq!(occlude_ellipses(&disc(), &spec).unwrap(), disc());
    }

    #[test]
    fn removes_face_only_and_is_seeded() {
        let m = disc();
        for seed in 0..20 {
            let spec = EllipseOcclusionSpec {
                seed,
                ..Default::default()
            };
            let out = occlude_ellipses(&m, &spec).unwrap();
            assert!(out.face_area() < m.face_area());
            assert_eq!(out, occlude_ellipses(&m, &spec).unwrap());
            for y in 0..64 {
                for x in 0..64 {
                    assert!(!out.is_face(x, y) || m.is_face(x, y));
                    if !m.is_face(x, y) {
                        assert_eq!(out.get(x, y), m.get(x, y));
                    }
                }
            }
        }
    }
}
