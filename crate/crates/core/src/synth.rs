//! Synthetic faces with closed-form ground truth.
//!
//! A 98-point 3-D template in the WFLW layout, mirror-symmetric under
//! [`FLIP`], is rotated by yaw (about the vertical axis), pitch (about the
//! horizontal axis) and roll (in the image plane) and projected
//! orthographically. The same geometry drives a flat-shaded renderer that
//! also produces the segmentation mask, and a pair sampler for training
//! the landmark transformer.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Real;
use crate::transformer::{normalize_landmarks, TrainingSample};
use crate::types::{
    BoundingBox, FrameRecord, FrameSequence, ImageBuffer, ImageRef, LandmarkSet, MaskRef, Point2, PoseAngles, SegMask,
};
use crate::wflw::{FLIP, NUM_LANDMARKS};

type V3 = [f64; 3];

/// Template landmarks in face units: x right, y down, z toward the camera.
pub fn template() -> Vec<V3> {
    let mut p = [[f64::NAN; 3]; NUM_LANDMARKS];
    for (i, q) in p.iter_mut().enumerate().take(33) {
        let a = PI * i as f64 / 32.0;
        *q = [-0.9 * a.cos(), -0.15 + 0.95 * a.sin(), -0.55 + 0.5 * a.sin()];
    }
    for j in 0..5 {
        let t = j as f64 / 4.0;
        p[33 + j] = [-0.78 + 0.56 * t, -0.5 - 0.07 * (PI * t).sin(), 0.05 + 0.15 * t];
    }
    for k in 0..4 {
        let t = k as f64 / 3.0;
        p[38 + k] = [
            -0.26 - 0.42 * t,
            -0.44 - 0.04 * (PI * (0.2 + 0.6 * t)).sin(),
            0.2 - 0.15 * t,
        ];
    }
    for k in 0..4 {
        p[51 + k] = [0.0, -0.3 + 0.11 * k as f64, 0.15 + 0.12 * k as f64];
    }
    for i in 55..60 {
        let d = i as f64 - 57.0;
        p[i] = [0.09 * d, 0.15 - 0.02 * d.abs(), 0.42 - 0.06 * d.abs()];
    }
    for j in 0..8 {
        let f = PI * j as f64 / 4.0;
        p[60 + j] = [-0.42 - 0.16 * f.cos(), -0.22 - 0.065 * f.sin(), 0.08];
    }
    for j in 0..12 {
        let f = PI * j as f64 / 6.0;
        p[76 + j] = [-0.36 * f.cos(), 0.42 - 0.1 * f.sin(), 0.22 - 0.1 * f.cos().abs()];
    }
    for j in 0..8 {
        let f = PI * j as f64 / 4.0;
        p[88 + j] = [-0.26 * f.cos(), 0.42 - 0.03 * f.sin(), 0.2];
    }
    p[96] = [-0.42, -0.22, 0.1];
    for i in 0..NUM_LANDMARKS {
        if p[i][0].is_nan() {
            let q = p[FLIP[i]];
            p[i] = [-q[0], q[1], q[2]];
        }
    }
    p.to_vec()
}

fn arc(radius: f64, count: usize, depth: f64) -> Vec<V3> {
    (0..=count)
        .map(|k| {
            let a = PI * k as f64 / count as f64;
            [-radius * a.cos(), -0.15 - radius * a.sin(), depth + 0.45 * a.sin()]
        })
        .collect()
}

/// Rotation by yaw, then pitch, then roll; roll uses the same sense as
/// [`crate::geometry::Affine2::rotation_about`].
pub fn rotate(p: V3, pose: PoseAngles<f64>) -> V3 {
    let (sy, cy) = pose.yaw.to_radians().sin_cos();
    let (sp, cp) = pose.pitch.to_radians().sin_cos();
    let (sr, cr) = pose.roll.to_radians().sin_cos();
    let [x, y, z] = p;
    let (x, z) = (cy * x + sy * z, -sy * x + cy * z);
    let (y, z) = (cp * y - sp * z, sp * y + cp * z);
    [cr * x - sr * y, sr * x + cr * y, z]
}

/// One synthetic identity.
#[derive(Debug, Clone)]
pub struct FaceInstance {
    pub points: Vec<V3>,
    head: Vec<V3>,
    hair: Vec<V3>,
    /// Face units to pixels, as a fraction of the frame width.
    pub scale: f64,
    /// Head center offset from the frame center, as fractions of width and height.
    pub offset: (f64, f64),
    pub skin: [f64; 3],
    pub hair_color: [f64; 3],
}

impl Default for FaceInstance {
    fn default() -> Self {
        FaceInstance {
            points: template(),
            head: arc(0.9, 12, -0.55),
            hair: arc(1.08, 12, -0.6),
            scale: 0.27,
            offset: (0.0, 0.0),
            skin: [0.86, 0.66, 0.55],
            hair_color: [0.24, 0.15, 0.1],
        }
    }
}

impl FaceInstance {
    /// Random proportions, placement and colouring around the template.
    /// `noise` is the per-point standard deviation in face units.
    pub fn sample(rng: &mut impl Rng, noise: f64) -> Self {
        let mut face = FaceInstance::default();
        let width = rng.random_range(0.9..1.1);
        let eye = rng.random_range(0.85..1.15);
        let mouth = rng.random_range(0.85..1.15);
        let jitter = Normal::new(0.0, noise.max(1e-12)).expect("positive");
        for (i, p) in face.points.iter_mut().enumerate() {
            p[0] *= width;
            if (60..76).contains(&i) {
                let c = if i < 68 { -0.42 * width } else { 0.42 * width };
                p[0] = c + (p[0] - c) * eye;
                p[1] = -0.22 + (p[1] + 0.22) * eye;
            }
            if (76..96).contains(&i) {
                p[0] *= mouth;
            }
            if noise > 0.0 {
                for v in p.iter_mut() {
                    *v += jitter.sample(rng);
                }
            }
        }
        for p in face.head.iter_mut().chain(face.hair.iter_mut()) {
            p[0] *= width;
        }
        face.scale = rng.random_range(0.25..0.29);
        face.offset = (rng.random_range(-0.03..0.03), rng.random_range(-0.02..0.04));
        let tone = rng.random_range(0.75..1.0);
        face.skin = [0.92 * tone, 0.7 * tone, 0.58 * tone];
        face.hair_color = [
            rng.random_range(0.1..0.5),
            rng.random_range(0.08..0.3),
            rng.random_range(0.05..0.2),
        ];
        face
    }

    fn project(&self, p: V3, pose: PoseAngles<f64>, width: usize, height: usize) -> Point2<f64> {
        let q = rotate(p, pose);
        let (w, h) = (width as f64, height as f64);
        let s = self.scale * w;
        Point2::new(
            w * (0.5 + self.offset.0) + s * q[0],
            h * (0.5 + self.offset.1) + s * q[1],
        )
    }

    fn project_all(&self, pts: &[V3], pose: PoseAngles<f64>, width: usize, height: usize) -> Vec<Point2<f64>> {
        pts.iter().map(|&p| self.project(p, pose, width, height)).collect()
    }

    /// Projected landmarks in pixels.
    pub fn landmarks<T: Real>(&self, pose: PoseAngles<f64>, width: usize, height: usize) -> LandmarkSet<T> {
        let pts = self.project_all(&self.points, pose, width, height);
        LandmarkSet::new(pts.into_iter().map(|p| Point2::new(T::lit(p.x), T::lit(p.y))).collect())
            .expect("template projects to finite points")
    }

    /// Square box around the projected head.
    pub fn bbox<T: Real>(&self, pose: PoseAngles<f64>, width: usize, height: usize) -> BoundingBox<T> {
        let mut pts = self.project_all(&self.points, pose, width, height);
        pts.extend(self.project_all(&self.head, pose, width, height));
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let side = 1.15 * (x1 - x0).max(y1 - y0);
        let side = side.min(width as f64).min(height as f64);
        let cx = (0.5 * (x0 + x1)).clamp(0.5 * side, width as f64 - 0.5 * side);
        let cy = (0.5 * (y0 + y1)).clamp(0.5 * side, height as f64 - 0.5 * side);
        BoundingBox::new(T::lit(cx), T::lit(cy), T::lit(side), T::lit(side)).expect("positive extent")
    }

    /// Flat-shaded frame, 2×2 supersampled, plus its label mask.
    pub fn render<T: Real>(&self, pose: PoseAngles<f64>, width: usize, height: usize) -> (ImageBuffer<T>, SegMask) {
        let lm = self.project_all(&self.points, pose, width, height);
        let face = convex_hull(&[lm[..33].to_vec(), self.project_all(&self.head, pose, width, height)].concat());
        let hair_pts = self.project_all(&self.hair, pose, width, height);
        let mut hair_outline = hair_pts.clone();
        hair_outline.push(lm[0]);
        hair_outline.push(lm[32]);
        let hair = convex_hull(&hair_outline);
        let brow_l: Vec<_> = lm[33..42].to_vec();
        let brow_r: Vec<_> = [&lm[42..47], &[lm[50], lm[49], lm[48], lm[47]][..]].concat();
        let eye_l: Vec<_> = lm[60..68].to_vec();
        let eye_r: Vec<_> = lm[68..76].to_vec();
        let lips: Vec<_> = lm[76..88].to_vec();
        let inner: Vec<_> = lm[88..96].to_vec();
        let nose: Vec<_> = lm[55..60].to_vec();
        let bridge: Vec<_> = lm[51..55].to_vec();
        let eye_w = |e: &[Point2<f64>]| e[0].dist(e[4]);
        let iris = [(lm[96], 0.28 * eye_w(&eye_l)), (lm[97], 0.28 * eye_w(&eye_r))];
        let center = face.iter().fold(Point2::new(0.0, 0.0), |a, &b| a + b) * (1.0 / face.len() as f64);
        let radius = face.iter().map(|p| p.dist(center)).fold(0.0, f64::max).max(1.0);
        let line_w = (0.012 * self.scale * width as f64 * 4.0).max(1.0);
        let (w, h) = (width as f64, height as f64);

        let shade = |p: Point2<f64>| -> ([f64; 3], u8) {
            if point_in_polygon(p, &face) {
                let d = p.dist(center) / radius;
                let s = 0.8 + 0.2 * (1.0 - d * d).max(0.0);
                let mut c = self.skin.map(|v| v * s);
                if point_in_polygon(p, &brow_l) || point_in_polygon(p, &brow_r) {
                    c = self.hair_color.map(|v| 0.8 * v);
                }
                if point_in_polygon(p, &eye_l) || point_in_polygon(p, &eye_r) {
                    c = [0.94, 0.94, 0.92];
                    for (q, r) in iris {
                        if p.dist(q) < r {
                            c = [0.22, 0.3, 0.45];
                        }
                        if p.dist(q) < 0.45 * r {
                            c = [0.05, 0.05, 0.06];
                        }
                    }
                }
                if polyline_dist(p, &nose) < line_w || polyline_dist(p, &bridge) < 0.5 * line_w {
                    c = self.skin.map(|v| 0.62 * v);
                }
                if point_in_polygon(p, &lips) {
                    c = [0.72, 0.3, 0.32];
                }
                if point_in_polygon(p, &inner) {
                    c = [0.28, 0.06, 0.08];
                }
                (c, SegMask::FACE)
            } else if point_in_polygon(p, &hair) {
                (self.hair_color, SegMask::HAIR)
            } else {
                (
                    [0.3 + 0.3 * p.y / h, 0.42 + 0.1 * p.x / w, 0.58 - 0.25 * p.x / w],
                    SegMask::BACKGROUND,
                )
            }
        };

        let mut data = Vec::with_capacity(width * height * 3);
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let mut acc = [0.0; 3];
                for (dx, dy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    let (c, _) = shade(Point2::new(x as f64 + dx, y as f64 + dy));
                    for k in 0..3 {
                        acc[k] += 0.25 * c[k];
                    }
                }
                data.extend(acc.map(T::lit));
                labels.push(shade(Point2::new(x as f64 + 0.5, y as f64 + 0.5)).1);
            }
        }
        (
            ImageBuffer::new(width, height, 3, data).expect("colours lie in [0, 1]"),
            SegMask::new(width, height, labels).expect("valid labels"),
        )
    }

    /// A frame record with in-memory pixels and mask.
    pub fn frame<T: Real>(&self, frame: usize, pose: PoseAngles<f64>, width: usize, height: usize) -> FrameRecord<T> {
        let (image, mask) = self.render(pose, width, height);
        FrameRecord {
            frame,
            image: ImageRef::Memory(Arc::new(image)),
            mask: Some(MaskRef::Memory(Arc::new(mask))),
            mirrored: false,
            frame_size: (width, height),
            bbox: self.bbox(pose, width, height),
            landmarks: self.landmarks(pose, width, height),
            pose: PoseAngles::new(T::lit(pose.yaw), T::lit(pose.pitch), T::lit(pose.roll)),
        }
    }

    /// Renders one frame per pose, numbered from zero.
    pub fn sequence<T: Real>(&self, poses: &[PoseAngles<f64>], width: usize, height: usize) -> FrameSequence<T> {
        FrameSequence::new(
            poses
                .iter()
                .enumerate()
                .map(|(i, &p)| self.frame(i, p, width, height))
                .collect(),
        )
        .expect("indices increase")
    }
}

/// Smooth head motion covering both yaw signs.
pub fn sweep_poses(n: usize) -> Vec<PoseAngles<f64>> {
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            PoseAngles::new(
                -40.0 + 80.0 * t,
                15.0 * (2.0 * PI * t + 0.3).sin(),
                6.0 * (3.0 * PI * t).sin(),
            )
        })
        .collect()
}

/// `(p_s, θ_t, p_t)` triples from randomly sampled identities, with poses
/// uniform in `[-45°, 45°]³` and `noise_px` Gaussian landmark noise at a
/// 256-pixel frame. Landmarks are returned normalized to `[-1, 1]`.
pub fn rotation_corpus<T: Real>(count: usize, seed: u64, noise_px: f64) -> Vec<TrainingSample<T>> {
    const SIZE: usize = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_px.max(1e-12)).expect("positive");
    let pose = |rng: &mut ChaCha8Rng| {
        PoseAngles::new(
            rng.random_range(-45.0..45.0),
            rng.random_range(-45.0..45.0),
            rng.random_range(-45.0..45.0),
        )
    };
    (0..count)
        .map(|_| {
            let face = FaceInstance::sample(&mut rng, 0.01);
            let (ps, pt) = (pose(&mut rng), pose(&mut rng));
            let noisy = |p: PoseAngles<f64>, rng: &mut ChaCha8Rng| {
                let lm: LandmarkSet<f64> = face.landmarks(p, SIZE, SIZE);
                let lm = if noise_px > 0.0 {
                    let pts = lm
                        .points()
                        .iter()
                        .map(|q| Point2::new(q.x + noise.sample(rng), q.y + noise.sample(rng)));
                    LandmarkSet::new(pts.collect()).expect("finite")
                } else {
                    lm
                };
                let n = normalize_landmarks(&lm, SIZE, SIZE).expect("finite");
                LandmarkSet::new(
                    n.points()
                        .iter()
                        .map(|q| Point2::new(T::lit(q.x), T::lit(q.y)))
                        .collect(),
                )
                .expect("finite")
            };
            let source = noisy(ps, &mut rng);
            let target = noisy(pt, &mut rng);
            TrainingSample {
                source,
                pose: PoseAngles::new(T::lit(pt.yaw), T::lit(pt.pitch), T::lit(pt.roll)),
                target,
            }
        })
        .collect()
}

/// Andrew's monotone chain; counter-clockwise in image axes.
pub fn convex_hull(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2<f64>, a: Point2<f64>, b: Point2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Even-odd rule.
pub fn point_in_polygon(p: Point2<f64>, poly: &[Point2<f64>]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
            inside = !inside;
        }
    }
    inside
}

fn polyline_dist(p: Point2<f64>, line: &[Point2<f64>]) -> f64 {
    line.windows(2)
        .map(|s| {
            let (a, b) = (s[0], s[1]);
            let ab = b - a;
            let len = ab.norm_sq();
            let t = if len > 0.0 {
                (((p - a).x * ab.x + (p - a).y * ab.y) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            p.dist(a + ab * t)
        })
        .fold(f64::INFINITY, f64::min)
}
