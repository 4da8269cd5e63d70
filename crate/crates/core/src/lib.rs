//! Numerical core of the facepipe face reenactment and swapping toolkit.
//!
//! Everything here is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64`, which the pipeline uses throughout.

pub mod appearance;
pub mod blend;
pub mod delaunay;
pub mod error;
pub mod geometry;
pub mod heatmap;
pub mod imageops;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod render;
pub mod scalar;
pub mod synth;
pub mod tracking;
pub mod transformer;
pub mod types;
pub mod wflw;

pub use error::{Error, Result};
pub use scalar::Real;
pub use types::{
    binary_face_mask, iou, BoundingBox, FrameRecord, FrameSequence, ImageBuffer, ImageRef, LandmarkSet, MaskRef,
    Point2, PoseAngles, SegMask,
};

pub type Image = ImageBuffer<f64>;
pub type Landmarks = LandmarkSet<f64>;
pub type Pose = PoseAngles<f64>;
pub type BBox = BoundingBox<f64>;
pub type Frame = FrameRecord<f64>;
pub type Sequence = FrameSequence<f64>;
pub type Heatmap = heatmap::Heatmap<f64>;
pub type ActivationVolume = heatmap::ActivationVolume<f64>;
pub type Smoothing = tracking::SmoothingParams<f64>;

pub type ImageF32 = ImageBuffer<f32>;
pub type LandmarksF32 = LandmarkSet<f32>;
