//! Appearance map: source views embedded by (yaw, pitch) in a Delaunay
//! mesh over `[-75°, 75°]²`, queried with barycentric coordinates.
//!
//! The four corners of the square are boundary vertices with no view
//! behind them; they take no weight in a query.

use serde::{Deserialize, Serialize};

use crate::delaunay::Triangulation;
use crate::error::{Error, Result};
use crate::geometry::{barycentric, orient2d};
use crate::imageops::{crop, landmarks_to_crop, laplacian_variance, weighted_sum};
use crate::kdtree::KdTree2;
use crate::render::{RenderTarget, Renderer, View};
use crate::scalar::Real;
use crate::types::{FrameRecord, FrameSequence, ImageBuffer, ImageRef, Point2, PoseAngles};
use crate::wflw::mirror_landmarks;

pub const POSE_LIMIT: f64 = 75.0;
pub const DEFAULT_PRUNE_RADIUS: f64 = 5.0;
pub const BOUNDARY_VERTICES: usize = 4;
/// Side of the square crop that sharpness is measured on.
const SHARPNESS_CROP: usize = 128;

fn yaw_pitch<T: Real>(p: &PoseAngles<T>) -> Point2<T> {
    Point2::new(p.yaw, p.pitch)
}

fn by_abs_roll<T: Real>(seq: &FrameSequence<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..seq.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (seq.frames()[a].pose.roll.abs(), seq.frames()[b].pose.roll.abs());
        ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn subset<T: Real>(seq: &FrameSequence<T>, mut keep: Vec<usize>) -> FrameSequence<T> {
    keep.sort_unstable();
    FrameSequence::new(keep.into_iter().map(|i| seq.frames()[i].clone()).collect()).expect("subset keeps order")
}

/// Greedy pass in ascending `|roll|`: a frame is kept unless an already
/// kept frame lies within `radius` degrees in (yaw, pitch). Output keeps
/// the input order.
pub fn prune_views<T: Real>(seq: &FrameSequence<T>, radius: T) -> FrameSequence<T> {
    let mut tree = KdTree2::new();
    let mut keep = Vec::new();
    for i in by_abs_roll(seq) {
        let q = yaw_pitch(&seq.frames()[i].pose);
        if !tree.any_within(q, radius) {
            tree.insert(q, i);
            keep.push(i);
        }
    }
    subset(seq, keep)
}

/// Sharpness score: variance of the Laplacian over the face crop.
pub fn sharpness<T: Real>(frame: &FrameRecord<T>) -> Result<T> {
    let img = frame.load_image()?;
    Ok(laplacian_variance(&crop(&img, &frame.bbox, SHARPNESS_CROP)))
}

/// Drops frames whose [`sharpness`] is below `threshold`.
pub fn prune_blurry<T: Real>(seq: &FrameSequence<T>, threshold: T) -> Result<FrameSequence<T>> {
    let mut keep = Vec::new();
    for (i, f) in seq.iter().enumerate() {
        if sharpness(f)? >= threshold {
            keep.push(i);
        }
    }
    Ok(subset(seq, keep))
}

/// When every view with non-zero yaw has the same yaw sign, appends the
/// horizontal mirror of each such view: yaw and roll negated, landmarks
/// reflected with left/right indices swapped. Mirrored records reuse the
/// source pixels with `mirrored` set and take fresh frame indices after
/// the last one.
pub fn mirror_fill<T: Real>(seq: &FrameSequence<T>) -> FrameSequence<T> {
    let pos = seq.iter().any(|f| f.pose.yaw > T::zero());
    let neg = seq.iter().any(|f| f.pose.yaw < T::zero());
    if pos == neg {
        return seq.clone();
    }
    let mut frames = seq.frames().to_vec();
    let mut next = seq.last().map_or(0, |f| f.frame + 1);
    for f in seq.iter().filter(|f| f.pose.yaw != T::zero()) {
        let w = T::from_usize_lossy(f.frame_size.0);
        let mut bbox = f.bbox;
        bbox.cx = w - bbox.cx;
        frames.push(FrameRecord {
            frame: next,
            image: f.image.clone(),
            mask: f.mask.clone(),
            mirrored: !f.mirrored,
            frame_size: f.frame_size,
            bbox,
            landmarks: mirror_landmarks(&f.landmarks, w),
            pose: PoseAngles::new(-f.pose.yaw, f.pose.pitch, -f.pose.roll),
        });
        next += 1;
    }
    FrameSequence::new(frames).expect("appended indices increase")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapVertex {
    pub yaw: f64,
    pub pitch: f64,
    pub boundary: bool,
}

/// Result of a pose query.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewAnswer<T: Real> {
    pub triangle: usize,
    pub vertices: [usize; 3],
    /// Barycentric coordinates before boundary exclusion.
    pub barycentric: [T; 3],
    /// `(vertex, λ)` over non-boundary vertices, summing to one.
    pub weights: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
pub struct AppearanceMap<T: Real> {
    mesh: Triangulation<T>,
    /// `views[i]` sits at vertex `BOUNDARY_VERTICES + i`.
    views: Vec<FrameRecord<T>>,
}

impl<T: Real> AppearanceMap<T> {
    /// Triangulates the (yaw, pitch) of every view with the corners of
    /// `[-75, 75]²`. Views sharing exactly the same (yaw, pitch) keep only
    /// the one with the smallest `|roll|`.
    pub fn build(seq: &FrameSequence<T>) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::invalid("an appearance map needs at least one view"));
        }
        let limit = T::lit(POSE_LIMIT);
        for f in seq.iter() {
            let p = yaw_pitch(&f.pose);
            if !(p.x.abs() < limit && p.y.abs() < limit) {
                return Err(Error::ViewOutOfRange {
                    frame: f.frame,
                    yaw: p.x.as_f64(),
                    pitch: p.y.as_f64(),
                });
            }
        }
        let mut keep: Vec<usize> = Vec::new();
        for i in by_abs_roll(seq) {
            let p = yaw_pitch(&seq.frames()[i].pose);
            if !keep.iter().any(|&k| yaw_pitch(&seq.frames()[k].pose) == p) {
                keep.push(i);
            }
        }
        let views = subset(seq, keep).into_frames();
        let points: Vec<Point2<T>> = views.iter().map(|f| yaw_pitch(&f.pose)).collect();
        let mesh = Triangulation::in_rectangle(Point2::new(-limit, -limit), Point2::new(limit, limit), &points)?;
        debug_assert!(mesh.skipped().is_empty());
        Ok(AppearanceMap { mesh, views })
    }

    pub fn mesh(&self) -> &Triangulation<T> {
        &self.mesh
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        self.mesh.triangles()
    }

    pub fn views(&self) -> &[FrameRecord<T>] {
        &self.views
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.points().len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        v < BOUNDARY_VERTICES
    }

    /// The view behind vertex `v`; `None` for boundary vertices.
    pub fn view(&self, v: usize) -> Option<&FrameRecord<T>> {
        v.checked_sub(BOUNDARY_VERTICES).and_then(|i| self.views.get(i))
    }

    pub fn vertices(&self) -> Vec<MapVertex> {
        self.mesh
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| MapVertex {
                yaw: p.x.as_f64(),
                pitch: p.y.as_f64(),
                boundary: self.is_boundary(i),
            })
            .collect()
    }

    /// Fraction of the pose square covered by triangles with at least one
    /// view vertex.
    pub fn coverage(&self) -> f64 {
        let total = (2.0 * POSE_LIMIT).powi(2);
        let covered: f64 = (0..self.triangles().len())
            .filter(|&t| self.triangles()[t].iter().any(|&v| !self.is_boundary(v)))
            .map(|t| {
                let [a, b, c] = self.mesh.triangle_points(t);
                0.5 * orient2d(a, b, c).as_f64()
            })
            .sum();
        covered / total
    }

    /// Containing triangle and renormalized weights for a pose.
    pub fn locate(&self, pose: &PoseAngles<T>) -> Result<ViewAnswer<T>> {
        let limit = T::lit(POSE_LIMIT);
        let q = yaw_pitch(pose);
        if !(q.x.abs() <= limit && q.y.abs() <= limit) {
            return Err(Error::PoseOutOfRange {
                yaw: q.x.as_f64(),
                pitch: q.y.as_f64(),
                limit: POSE_LIMIT,
            });
        }
        let triangle = self
            .mesh
            .locate(q)
            .ok_or_else(|| Error::invalid("query not covered by the mesh"))?;
        let vertices = self.triangles()[triangle];
        let [a, b, c] = self.mesh.triangle_points(triangle);
        let bary = barycentric(a, b, c, q).expect("mesh triangles have positive area");
        let kept: Vec<(usize, T)> = vertices
            .iter()
            .zip(bary)
            .filter(|(&v, _)| !self.is_boundary(v))
            .map(|(&v, l)| (v, l.max(T::zero())))
            .collect();
        let total: T = kept.iter().map(|&(_, l)| l).sum();
        if kept.is_empty() || total <= T::zero() {
            return Err(Error::AllBoundary(triangle));
        }
        let weights = kept
            .into_iter()
            .filter(|&(_, l)| l > T::zero())
            .map(|(v, l)| (v, l / total))
            .collect();
        Ok(ViewAnswer {
            triangle,
            vertices,
            barycentric: bary,
            weights,
        })
    }

    /// JSON form served to clients.
    pub fn to_json(&self) -> MapJson {
        MapJson {
            version: 1,
            limit: POSE_LIMIT,
            vertices: self
                .vertices()
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let view = self.view(i);
                    VertexJson {
                        id: i,
                        yaw: v.yaw,
                        pitch: v.pitch,
                        boundary: v.boundary,
                        roll: view.map(|f| f.pose.roll.as_f64()),
                        frame: view.map(|f| f.frame),
                        image: view.and_then(|f| match &f.image {
                            ImageRef::Path(p) => Some(p.display().to_string()),
                            ImageRef::Memory(_) => None,
                        }),
                        mirrored: view.is_some_and(|f| f.mirrored),
                    }
                })
                .collect(),
            triangles: self.triangles().to_vec(),
            coverage: Coverage {
                views: self.views.len(),
                triangles: self.triangles().len(),
                area: self.coverage(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexJson {
    pub id: usize,
    pub yaw: f64,
    pub pitch: f64,
    pub boundary: bool,
    pub roll: Option<f64>,
    pub frame: Option<usize>,
    pub image: Option<String>,
    pub mirrored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub views: usize,
    pub triangles: usize,
    /// Fraction of the pose square answerable by some view.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapJson {
    pub version: u32,
    pub limit: f64,
    pub vertices: Vec<VertexJson>,
    pub triangles: Vec<[usize; 3]>,
    pub coverage: Coverage,
}

/// A frame cropped to its box at `size`×`size`, landmarks in crop pixels.
pub fn load_view<T: Real>(frame: &FrameRecord<T>, size: usize) -> Result<View<T>> {
    let img = frame.load_image()?;
    Ok(View {
        image: crop(&img, &frame.bbox, size),
        landmarks: landmarks_to_crop(&frame.landmarks, &frame.bbox, size)?,
        pose: frame.pose,
    })
}

/// `Σ λ_k R(view_k; target)` over the weighted vertices of `answer`, with
/// views cropped to `size`. Renders run in parallel; the sum follows the
/// weight order.
pub fn interpolate_views<T: Real>(
    map: &AppearanceMap<T>,
    answer: &ViewAnswer<T>,
    renderer: &dyn Renderer<T>,
    target: &RenderTarget<T>,
    size: usize,
) -> Result<ImageBuffer<T>> {
    use rayon::prelude::*;
    let rendered: Vec<ImageBuffer<T>> = answer
        .weights
        .par_iter()
        .map(|&(v, _)| {
            let frame = map
                .view(v)
                .ok_or_else(|| Error::invalid(format!("vertex {v} has no view")))?;
            renderer.render(&load_view(frame, size)?, target)
        })
        .collect::<Result<_>>()?;
    let weights: Vec<T> = answer.weights.iter().map(|&(_, l)| l).collect();
    weighted_sum(&rendered, &weights)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::render::IdentityRenderer;
    use crate::types::{BoundingBox, LandmarkSet};

    fn frame(i: usize, yaw: f64, pitch: f64, roll: f64) -> FrameRecord<f64> {
        let lm = LandmarkSet::new(
            (0..98)
                .map(|k| Point2::new(10.0 + k as f64 * 0.5, 20.0 + (k % 9) as f64))
                .collect(),
        )
        .unwrap();
        FrameRecord {
            frame: i,
            image: ImageRef::Memory(Arc::new(ImageBuffer::filled(8, 8, 3, 0.5))),
            mask: None,
            mirrored: false,
            frame_size: (8, 8),
            bbox: BoundingBox::new(4.0, 4.0, 8.0, 8.0).unwrap(),
            landmarks: lm,
            pose: PoseAngles::new(yaw, pitch, roll),
        }
    }

    fn seq(poses: &[(f64, f64, f64)]) -> FrameSequence<f64> {
        FrameSequence::new(
            poses
                .iter()
                .enumerate()
                .map(|(i, &(y, p, r))| frame(i, y, p, r))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prune_prefers_small_roll() {
        let s = prune_views(&seq(&[(10.0, 0.0, 10.0), (10.0, 0.0, 2.0)]), 5.0);
        assert_eq!(s.len(), 1);
        assert_eq!(s.frames()[0].pose.roll, 2.0);
    }

    #[test]
    fn prune_examples() {
        let spread = seq(&[(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (0.0, 10.0, 0.0)]);
        assert_eq!(prune_views(&spread, 5.0).len(), 3);
        let same = seq(&vec![(3.0, 4.0, 0.0); 100]);
        assert_eq!(prune_views(&same, 5.0).len(), 1);
    }

    #[test]
    fn one_view_gives_fan() {
        let m = AppearanceMap::build(&seq(&[(10.0, -5.0, 0.0)])).unwrap();
        assert_eq!(m.triangles().len(), 4);
        assert!(m.triangles().iter().all(|t| t.contains(&4)));
        assert!((m.coverage() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_out_of_range_rejected() {
        assert!(AppearanceMap::build(&FrameSequence::<f64>::empty()).is_err());
        match AppearanceMap::build(&seq(&[(0.0, 0.0, 0.0), (80.0, 0.0, 0.0)])) {
            Err(Error::ViewOutOfRange { frame, .. }) => assert_eq!(frame, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vertex_hit_has_unit_weight() {
        let m = AppearanceMap::build(&seq(&[(10.0, -5.0, 0.0), (-20.0, 30.0, 0.0)])).unwrap();
        let a = m.locate(&PoseAngles::new(-20.0, 30.0, 0.0)).unwrap();
        assert_eq!(a.weights, vec![(5, 1.0)]);
    }

    #[test]
    fn one_boundary_vertex_splits_evenly() {
        // corner (75, 75) plus two views near it form one triangle
        let m = AppearanceMap::build(&seq(&[(60.0, 0.0, 0.0), (0.0, 60.0, 0.0)])).unwrap();
        let t = m
            .triangles()
            .iter()
            .position(|t| {
                let mut s = *t;
                s.sort();
                s == [2, 4, 5]
            })
            .unwrap();
        let [a, b, c] = m.mesh().triangle_points(t);
        let centroid = (a + b + c) * (1.0 / 3.0);
        let ans = m.locate(&PoseAngles::new(centroid.x, centroid.y, 0.0)).unwrap();
        assert_eq!(ans.triangle, t);
        assert_eq!(ans.weights.len(), 2);
        for (_, w) in ans.weights {
            assert!((w - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn all_boundary_triangle_errors() {
        let m = AppearanceMap::build(&seq(&[(60.0, 60.0, 0.0)])).unwrap();
        // the far corner region is covered by a fan triangle, but the corner itself has no view weight
        assert!(m.locate(&PoseAngles::new(-70.0, -70.0, 0.0)).is_ok());
        let q = m.locate(&PoseAngles::new(-75.0, -75.0, 0.0));
        assert!(matches!(q, Err(Error::AllBoundary(_))));
        assert!(matches!(
            m.locate(&PoseAngles::new(76.0, 0.0, 0.0)),
            Err(Error::PoseOutOfRange { .. })
        ));
    }

    #[test]
    fn mirror_fill_rules() {
        let both = seq(&[(-10.0, 0.0, 0.0), (20.0, 0.0, 0.0)]);
        assert_eq!(mirror_fill(&both).len(), 2);
        let one = seq(&[(30.0, 4.0, 6.0)]);
        let filled = mirror_fill(&one);
        assert_eq!(filled.len(), 2);
        let m = &filled.frames()[1];
        assert_eq!(m.pose, PoseAngles::new(-30.0, 4.0, -6.0));
        assert!(m.mirrored);
        let src = &one.frames()[0].landmarks;
        for i in 0..98 {
            assert_eq!(m.landmarks.get(crate::wflw::FLIP[i]).x, 8.0 - src.get(i).x);
        }
    }

    #[test]
    fn interpolation_examples() {
        let mut s = seq(&[(-10.0, 0.0, 0.0), (10.0, 0.0, 0.0)]).into_frames();
        s[0].image = ImageRef::Memory(Arc::new(ImageBuffer::filled(8, 8, 3, 0.0)));
        s[1].image = ImageRef::Memory(Arc::new(ImageBuffer::filled(8, 8, 3, 1.0)));
        let m = AppearanceMap::build(&FrameSequence::new(s).unwrap()).unwrap();
        let answer = ViewAnswer {
            triangle: 0,
            vertices: [0, 4, 5],
            barycentric: [0.0; 3],
            weights: vec![(4, 0.25), (5, 0.75)],
        };
        let target = RenderTarget::landmarks(m.views()[0].landmarks.clone());
        let out = interpolate_views(&m, &answer, &IdentityRenderer, &target, 8).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
        let single = ViewAnswer {
            weights: vec![(5, 1.0)],
            ..answer
        };
        let out = interpolate_views(&m, &single, &IdentityRenderer, &target, 8).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }
}
