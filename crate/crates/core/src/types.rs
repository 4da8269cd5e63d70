//! Value types shared by every stage of the pipeline.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::wflw::NUM_LANDMARKS;

/// 2-D point in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "", from = "[T; 2]", into = "[T; 2]")]
pub struct Point2<T: Real> {
    pub x: T,
    pub y: T,
}

impl<T: Real> From<[T; 2]> for Point2<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Point2 { x, y }
    }
}

impl<T: Real> From<Point2<T>> for [T; 2] {
    fn from(p: Point2<T>) -> Self {
        [p.x, p.y]
    }
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    pub fn dist(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm_sq(self) -> T {
        self.x * self.x + self.y * self.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Real> std::ops::Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> std::ops::Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> std::ops::Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Point2::new(self.x * s, self.y * s)
    }
}

/// H×W×C image with row-major interleaved samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer<T: Real> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> ImageBuffer<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image extent must be non-zero"));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(width * height * channels, data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::invalid(format!("sample {v} outside [0, 1]")));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        assert!(channels == 1 || channels == 3);
        assert!(value >= T::zero() && value <= T::one());
        ImageBuffer {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, T::zero())
    }

    /// Builds an image from `f(x, y, c)`, clamping each sample into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        assert!(channels == 1 || channels == 3);
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp_to(T::zero(), T::one()));
                }
            }
        }
        ImageBuffer {
            width,
            height,
            channels,
            data,
        }
    }

    pub(crate) fn from_raw_clamped(width: usize, height: usize, channels: usize, mut data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        for v in &mut data {
            *v = v.clamp_to(T::zero(), T::one());
        }
        ImageBuffer {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.index(x, y, c)]
    }

    /// Writes one sample, clamped into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.index(x, y, c);
        self.data[i] = v.clamp_to(T::zero(), T::one());
    }

    pub fn same_extent(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn extent(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    /// Single channel `c` as a 1-channel image.
    pub fn channel(&self, c: usize) -> Self {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Replicates a gray image to 3 channels; 3-channel images are returned as is.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// Axis-aligned box given by its center and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundingBox<T: Real> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BoundingBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        let b = BoundingBox { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_corners(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        let two = T::lit(2.0);
        Self::new((x0 + x1) / two, (y0 + y1) / two, x1 - x0, y1 - y0)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bounding box"));
        }
        if !(self.w > T::zero() && self.h > T::zero()) {
            return Err(Error::invalid("bounding box extent must be positive"));
        }
        Ok(())
    }

    pub fn x0(&self) -> T {
        self.cx - self.w / T::lit(2.0)
    }

    pub fn y0(&self) -> T {
        self.cy - self.h / T::lit(2.0)
    }

    pub fn x1(&self) -> T {
        self.cx + self.w / T::lit(2.0)
    }

    pub fn y1(&self) -> T {
        self.cy + self.h / T::lit(2.0)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn iou(&self, other: &Self) -> T {
        iou(self, other)
    }
}

/// Intersection over union of two boxes; 0 when they are disjoint.
pub fn iou<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let iw = (a.x1().min(b.x1()) - a.x0().max(b.x0())).max(T::zero());
    let ih = (a.y1().min(b.y1()) - a.y0().max(b.y0())).max(T::zero());
    let inter = iw * ih;
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp_to(T::zero(), T::one())
}

/// Exactly 98 WFLW-ordered points in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "Vec<Point2<T>>", into = "Vec<Point2<T>>")]
pub struct LandmarkSet<T: Real> {
    points: Vec<Point2<T>>,
}

impl<T: Real> TryFrom<Vec<Point2<T>>> for LandmarkSet<T> {
    type Error = Error;
    fn try_from(points: Vec<Point2<T>>) -> Result<Self> {
        LandmarkSet::new(points)
    }
}

impl<T: Real> From<LandmarkSet<T>> for Vec<Point2<T>> {
    fn from(l: LandmarkSet<T>) -> Self {
        l.points
    }
}

impl<T: Real> LandmarkSet<T> {
    pub fn new(points: Vec<Point2<T>>) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::shape(format!("{NUM_LANDMARKS} landmarks"), points.len()));
        }
        if !points.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("landmarks"));
        }
        Ok(LandmarkSet { points })
    }

    /// From a flat `[x0, y0, x1, y1, ...]` vector of length 196.
    pub fn from_flat(flat: &[T]) -> Result<Self> {
        if flat.len() != 2 * NUM_LANDMARKS {
            return Err(Error::shape(2 * NUM_LANDMARKS, flat.len()));
        }
        Self::new(flat.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect())
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    pub fn get(&self, i: usize) -> Point2<T> {
        self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `f` to every point; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(Point2<T>) -> Point2<T>) -> Result<Self> {
        Self::new(self.points.iter().map(|&p| f(p)).collect())
    }

    /// Replaces the points at `indices` with `f(i)`.
    pub fn with_points(&self, indices: std::ops::Range<usize>, f: impl Fn(usize) -> Point2<T>) -> Result<Self> {
        let mut points = self.points.clone();
        for i in indices {
            points[i] = f(i);
        }
        Self::new(points)
    }

    pub fn centroid(&self, indices: std::ops::Range<usize>) -> Point2<T> {
        let n = T::from_usize_lossy(indices.len());
        let (sx, sy) = self.points[indices]
            .iter()
            .fold((T::zero(), T::zero()), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2::new(sx / n, sy / n)
    }
}

/// Head pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PoseAngles<T: Real> {
    pub yaw: T,
    pub pitch: T,
    pub roll: T,
}

impl<T: Real> PoseAngles<T> {
    pub fn new(yaw: T, pitch: T, roll: T) -> Self {
        PoseAngles { yaw, pitch, roll }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.yaw, self.pitch, self.roll]
    }

    /// Wraps every angle into `[-180, 180)`.
    pub fn canonical(self) -> Self {
        let wrap = |a: T| {
            let full = T::lit(360.0);
            let half = T::lit(180.0);
            let r = (a + half) % full;
            let r = if r < T::zero() { r + full } else { r };
            r - half
        };
        PoseAngles::new(wrap(self.yaw), wrap(self.pitch), wrap(self.roll))
    }

    /// `(1 - t) * self + t * other`, component-wise. Evaluated as
    /// `self + t * (other - self)` so equal endpoints stay exact.
    pub fn lerp(self, other: Self, t: T) -> Self {
        let f = |a: T, b: T| a + t * (b - a);
        PoseAngles::new(
            f(self.yaw, other.yaw),
            f(self.pitch, other.pitch),
            f(self.roll, other.roll),
        )
    }
}

/// Per-pixel segmentation labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SegMask {
    pub const BACKGROUND: u8 = 0;
    pub const FACE: u8 = 1;
    pub const HAIR: u8 = 2;

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape(width * height, labels.len()));
        }
        if let Some(l) = labels.iter().find(|&&l| l > Self::HAIR) {
            return Err(Error::invalid(format!(
                "segmentation label {l} is not background/face/hair"
            )));
        }
        Ok(SegMask { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        assert!(label <= Self::HAIR);
        SegMask {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        assert!(label <= Self::HAIR);
        self.labels[y * self.width + x] = label;
    }

    pub fn is_face(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == Self::FACE
    }

    pub fn face_area(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Self::FACE).count()
    }
}

/// 1-channel `{0, 1}` image that is 1 exactly on face pixels.
pub fn binary_face_mask<T: Real>(mask: &SegMask) -> ImageBuffer<T> {
    let data = mask
        .labels
        .iter()
        .map(|&l| if l == SegMask::FACE { T::one() } else { T::zero() })
        .collect();
    ImageBuffer {
        width: mask.width,
        height: mask.height,
        channels: 1,
        data,
    }
}

/// Where a frame's pixels come from.
#[derive(Debug, Clone)]
pub enum ImageRef<T: Real> {
    Path(PathBuf),
    Memory(Arc<ImageBuffer<T>>),
}

#[derive(Debug, Clone)]
pub enum MaskRef {
    Path(PathBuf),
    Memory(Arc<SegMask>),
}

/// One tracked face in one frame.
#[derive(Debug, Clone)]
pub struct FrameRecord<T: Real> {
    pub frame: usize,
    pub image: ImageRef<T>,
    pub mask: Option<MaskRef>,
    /// The stored pixels must be mirrored horizontally when loaded.
    pub mirrored: bool,
    /// Full frame `(width, height)` in pixels.
    pub frame_size: (usize, usize),
    pub bbox: BoundingBox<T>,
    pub landmarks: LandmarkSet<T>,
    pub pose: PoseAngles<T>,
}

/// Frames of one identity with strictly increasing frame indices.
#[derive(Debug, Clone, Default)]
pub struct FrameSequence<T: Real> {
    frames: Vec<FrameRecord<T>>,
}

impl<T: Real> FrameSequence<T> {
    pub fn new(frames: Vec<FrameRecord<T>>) -> Result<Self> {
        if let Some(w) = frames.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::invalid(format!(
                "frame indices must increase strictly ({} then {})",
                w[0].frame, w[1].frame
            )));
        }
        Ok(FrameSequence { frames })
    }

    pub fn empty() -> Self {
        FrameSequence { frames: Vec::new() }
    }

    pub fn frames(&self) -> &[FrameRecord<T>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<FrameRecord<T>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FrameRecord<T>> {
        self.frames.iter()
    }

    pub(crate) fn push(&mut self, rec: FrameRecord<T>) {
        debug_assert!(self.frames.last().is_none_or(|l| l.frame < rec.frame));
        self.frames.push(rec);
    }

    pub fn last(&self) -> Option<&FrameRecord<T>> {
        self.frames.last()
    }
}
