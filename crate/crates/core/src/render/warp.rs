//! Piecewise-affine warp between landmark meshes.

use crate::delaunay::Triangulation;
use crate::error::{Error, Result};
use crate::geometry::{orient2d, Affine2};
use crate::imageops::sample_bilinear;
use crate::render::{RenderTarget, Renderer, View};
use crate::scalar::Real;
use crate::types::{ImageBuffer, LandmarkSet, Point2};

#[derive(Debug, Clone, Copy, Default)]
pub struct WarpRenderer;

impl<T: Real> Renderer<T> for WarpRenderer {
    fn name(&self) -> &str {
        "warp"
    }

    fn supports_heatmap_conditioning(&self) -> bool {
        false
    }

    fn render(&self, view: &View<T>, target: &RenderTarget<T>) -> Result<ImageBuffer<T>> {
        Ok(warp_render(&view.image, &view.landmarks, &target.landmarks)?.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarpReport {
    /// Target triangles whose source triangle has zero area; their pixels
    /// use the map of the nearest valid triangle.
    pub degenerate_triangles: Vec<usize>,
    /// Pixels outside every target triangle, extrapolated from the nearest one.
    pub extrapolated_pixels: usize,
}

/// Corners (counter-clockwise from the origin) then edge midpoints of a
/// `width`×`height` frame.
pub fn border_anchors<T: Real>(width: usize, height: usize) -> [Point2<T>; 8] {
    let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
    let (hw, hh) = (w * T::lit(0.5), h * T::lit(0.5));
    let z = T::zero();
    [
        Point2::new(z, z),
        Point2::new(w, z),
        Point2::new(w, h),
        Point2::new(z, h),
        Point2::new(hw, z),
        Point2::new(w, hh),
        Point2::new(hw, h),
        Point2::new(z, hh),
    ]
}

/// Warps `img` so that landmarks `src` move to `tgt`, with fixed border anchors.
pub fn warp_render<T: Real>(
    img: &ImageBuffer<T>,
    src: &LandmarkSet<T>,
    tgt: &LandmarkSet<T>,
) -> Result<(ImageBuffer<T>, WarpReport)> {
    let anchors = border_anchors(img.width(), img.height());
    warp_render_with_anchors(img, src, tgt, &anchors, &anchors)
}

/// As [`warp_render`] with explicit anchors. The first four anchors of
/// each set must be the corners of an axis-aligned rectangle in the order
/// of [`border_anchors`].
pub fn warp_render_with_anchors<T: Real>(
    img: &ImageBuffer<T>,
    src: &LandmarkSet<T>,
    tgt: &LandmarkSet<T>,
    src_anchors: &[Point2<T>; 8],
    tgt_anchors: &[Point2<T>; 8],
) -> Result<(ImageBuffer<T>, WarpReport)> {
    let a = tgt_anchors;
    let rect = a[0].x == a[3].x && a[1].x == a[2].x && a[0].y == a[1].y && a[2].y == a[3].y;
    if !rect {
        return Err(Error::invalid(
            "target anchors 0..4 must be the corners of an axis-aligned rectangle",
        ));
    }
    let (w, h, ch) = img.extent();
    let (wf, hf) = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    if let Some(p) = src
        .points()
        .iter()
        .find(|p| p.x < T::zero() || p.y < T::zero() || p.x > wf || p.y > hf)
    {
        return Err(Error::OutOfBounds {
            x: p.x.as_f64(),
            y: p.y.as_f64(),
            width: w,
            height: h,
        });
    }
    let inner: Vec<Point2<T>> = a[4..].iter().chain(tgt.points()).copied().collect();
    let mesh = Triangulation::in_rectangle(a[0], a[2], &inner)?;
    let source: Vec<Point2<T>> = src_anchors.iter().chain(src.points()).copied().collect();

    let scale = (wf * hf).max(T::one());
    let tiny = T::lit(1e-12) * scale;
    let mut report = WarpReport::default();
    let maps: Vec<Option<Affine2<T>>> = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let s = t.map(|i| source[i]);
            if orient2d(s[0], s[1], s[2]).abs() <= tiny {
                report.degenerate_triangles.push(ti);
                return None;
            }
            Affine2::from_triangles(mesh.triangle_points(ti), s)
        })
        .collect();
    let centroid = |ti: usize| {
        let [p, q, r] = mesh.triangle_points(ti);
        (p + q + r) * (T::one() / T::lit(3.0))
    };
    let valid: Vec<usize> = (0..maps.len()).filter(|&i| maps[i].is_some()).collect();
    if valid.is_empty() {
        return Err(Error::invalid("every source triangle is degenerate"));
    }
    let resolved: Vec<Affine2<T>> = (0..maps.len())
        .map(|ti| {
            maps[ti].unwrap_or_else(|| {
                let c = centroid(ti);
                let best = valid
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        centroid(a)
                            .dist(c)
                            .partial_cmp(&centroid(b).dist(c))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("non-empty");
                maps[best].expect("valid")
            })
        })
        .collect();

    let half = T::lit(0.5);
    let center = |x: usize, y: usize| Point2::new(T::from_usize_lossy(x) + half, T::from_usize_lossy(y) + half);
    let mut owner: Vec<u32> = vec![u32::MAX; w * h];
    for (ti, t) in mesh.triangles().iter().enumerate() {
        let [p, q, r] = t.map(|i| mesh.vertex(i));
        let lo = |v: T| (v - half).ceil().max(T::zero()).to_usize().unwrap_or(0);
        let hi = |v: T, n: usize| ((v - half).floor().to_isize().unwrap_or(-1) + 1).clamp(0, n as isize) as usize;
        let (x0, x1) = (lo(p.x.min(q.x).min(r.x)), hi(p.x.max(q.x).max(r.x), w));
        let (y0, y1) = (lo(p.y.min(q.y).min(r.y)), hi(p.y.max(q.y).max(r.y), h));
        for y in y0..y1 {
            for x in x0..x1 {
                let o = &mut owner[y * w + x];
                if *o != u32::MAX {
                    continue;
                }
                let c = center(x, y);
                if orient2d(p, q, c) >= T::zero() && orient2d(q, r, c) >= T::zero() && orient2d(r, p, c) >= T::zero() {
                    *o = ti as u32;
                }
            }
        }
    }

    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            let c = center(x, y);
            let ti = match owner[y * w + x] {
                u32::MAX => {
                    report.extrapolated_pixels += 1;
                    nearest_triangle(&mesh, c)
                }
                t => t as usize,
            };
            let s = resolved[ti].apply(c);
            for k in 0..ch {
                data.push(sample_bilinear(img, s.x, s.y, k));
            }
        }
    }
    Ok((ImageBuffer::from_raw_clamped(w, h, ch, data), report))
}

/// Triangle whose smallest normalized edge-orientation value at `p` is largest.
fn nearest_triangle<T: Real>(mesh: &Triangulation<T>, p: Point2<T>) -> usize {
    let mut best = (0, T::neg_infinity());
    for ti in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle_points(ti);
        let area = orient2d(a, b, c);
        let m = (orient2d(b, c, p) / area)
            .min(orient2d(c, a, p) / area)
            .min(orient2d(a, b, p) / area);
        if m > best.1 {
            best = (ti, m);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::flip_horizontal;
    use crate::synth::FaceInstance;
    use crate::types::PoseAngles;

    fn face() -> (ImageBuffer<f64>, LandmarkSet<f64>) {
        let f = FaceInstance::default();
        let pose = PoseAngles::new(10.0, 5.0, 0.0);
        (f.render(pose, 96, 96).0, f.landmarks(pose, 96, 96))
    }

    #[test]
    fn identity_warp() {
        let (img, lm) = face();
        let (out, report) = warp_render(&img, &lm, &lm).unwrap();
        assert_eq!(report, WarpReport::default());
        let err = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn translation_shifts_interior() {
        let (img, lm) = face();
        let shift = |p: Point2<f64>| Point2::new(p.x + 5.0, p.y);
        let tgt = lm.map(shift).unwrap();
        let anchors = border_anchors::<f64>(96, 96);
        let (out, report) = warp_render_with_anchors(&img, &lm, &tgt, &anchors, &anchors.map(shift)).unwrap();
        assert_eq!(report.extrapolated_pixels, 5 * 96);
        for y in 0..96 {
            for x in 5..96 {
                for c in 0..3 {
                    assert!((out.get(x, y, c) - img.get(x - 5, y, c)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let (_, lm) = face();
        let img = ImageBuffer::filled(96, 96, 3, 0.37);
        let tgt = FaceInstance::default().landmarks(PoseAngles::new(-20.0, 0.0, 4.0), 96, 96);
        let (out, _) = warp_render(&img, &lm, &tgt).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn flip_equivariance() {
        let (img, lm) = face();
        let tgt: LandmarkSet<f64> = FaceInstance::default().landmarks(PoseAngles::new(-15.0, 0.0, 3.0), 96, 96);
        let mirror = |p: &LandmarkSet<f64>| p.map(|q| Point2::new(96.0 - q.x, q.y)).unwrap();
        let a = flip_horizontal(&warp_render(&img, &lm, &tgt).unwrap().0);
        let b = warp_render(&flip_horizontal(&img), &mirror(&lm), &mirror(&tgt))
            .unwrap()
            .0;
        let err = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn collapsed_source_triangle_is_flagged() {
        let (img, lm) = face();
        // squash the mouth onto one point in the source
        let src = lm.with_points(76..96, |_| lm.get(76)).unwrap();
        let (out, report) = warp_render(&img, &src, &lm).unwrap();
        assert!(!report.degenerate_triangles.is_empty());
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn out_of_bounds_target_rejected() {
        let (img, lm) = face();
        let tgt = lm.with_points(0..1, |_| Point2::new(-3.0, 10.0)).unwrap();
        assert!(warp_render(&img, &lm, &tgt).is_err());
    }
}
