//! Renderers that re-pose a face view to target landmarks.
//!
//! [`WarpRenderer`] is the reference: a piecewise-affine warp over a
//! Delaunay mesh of the target landmarks. [`IdentityRenderer`] returns the
//! view untouched. Anything else can plug in through [`Renderer`].

mod occlusion;
mod warp;

pub use occlusion::{occlude_ellipses, EllipseOcclusionSpec};
pub use warp::{border_anchors, warp_render, warp_render_with_anchors, WarpRenderer, WarpReport};

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::heatmap::{encode_heatmap, Heatmap};
use crate::scalar::Real;
use crate::transformer::{intermediate_landmarks, LandmarkTransform};
use crate::types::{ImageBuffer, LandmarkSet, PoseAngles};

/// A source image with its landmarks (pixels of that image) and pose.
#[derive(Debug, Clone)]
pub struct View<T: Real> {
    pub image: ImageBuffer<T>,
    pub landmarks: LandmarkSet<T>,
    pub pose: PoseAngles<T>,
}

/// What to render: target landmarks, optionally their heatmap and pose.
#[derive(Debug, Clone)]
pub struct RenderTarget<T: Real> {
    pub landmarks: LandmarkSet<T>,
    pub heatmap: Option<Heatmap<T>>,
    pub pose: Option<PoseAngles<T>>,
}

impl<T: Real> RenderTarget<T> {
    pub fn landmarks(landmarks: LandmarkSet<T>) -> Self {
        RenderTarget {
            landmarks,
            heatmap: None,
            pose: None,
        }
    }

    /// Attaches `H(p)` at the given extent.
    pub fn with_heatmap(mut self, height: usize, width: usize) -> Result<Self> {
        self.heatmap = Some(encode_heatmap(&self.landmarks, height, width)?);
        Ok(self)
    }
}

/// Output has the view's extent and values in `[0, 1]`.
pub trait Renderer<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    fn supports_heatmap_conditioning(&self) -> bool;

    fn render(&self, view: &View<T>, target: &RenderTarget<T>) -> Result<ImageBuffer<T>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRenderer;

impl<T: Real> Renderer<T> for IdentityRenderer {
    fn name(&self) -> &str {
        "identity"
    }

    fn supports_heatmap_conditioning(&self) -> bool {
        false
    }

    fn render(&self, view: &View<T>, _target: &RenderTarget<T>) -> Result<ImageBuffer<T>> {
        Ok(view.image.clone())
    }
}

/// Wraps a renderer and counts its calls.
pub struct CountingRenderer<'a, T: Real> {
    pub inner: &'a dyn Renderer<T>,
    calls: AtomicUsize,
}

impl<'a, T: Real> CountingRenderer<'a, T> {
    pub fn new(inner: &'a dyn Renderer<T>) -> Self {
        CountingRenderer {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Real> Renderer<T> for CountingRenderer<'_, T> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn supports_heatmap_conditioning(&self) -> bool {
        self.inner.supports_heatmap_conditioning()
    }

    fn render(&self, view: &View<T>, target: &RenderTarget<T>) -> Result<ImageBuffer<T>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.render(view, target)
    }
}

pub const RENDERER_NAMES: [&str; 2] = ["warp", "identity"];

pub fn renderer_by_name<T: Real>(name: &str) -> Result<Box<dyn Renderer<T>>> {
    match name {
        "warp" => Ok(Box::new(WarpRenderer)),
        "identity" => Ok(Box::new(IdentityRenderer)),
        other => Err(Error::invalid(format!(
            "unknown renderer {other:?}; expected one of {RENDERER_NAMES:?}"
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct Reenactment<T: Real> {
    pub image: ImageBuffer<T>,
    /// `p_1 .. p_n`, in pixels of the view.
    pub landmarks: Vec<LandmarkSet<T>>,
}

/// `I_{r_i} = R(I_{r_{i-1}}; p_i)` for `i = 1..=n` starting from the view,
/// along [`intermediate_landmarks`]. Each target carries `H(p_i)` when
/// `heatmaps` is set.
pub fn reenact_iterative<T: Real>(
    renderer: &dyn Renderer<T>,
    transform: &dyn LandmarkTransform<T>,
    view: &View<T>,
    target_pose: PoseAngles<T>,
    n: usize,
    target_landmarks: Option<&LandmarkSet<T>>,
    heatmaps: bool,
) -> Result<Reenactment<T>> {
    let path = intermediate_landmarks(transform, &view.landmarks, view.pose, target_pose, n, target_landmarks)?;
    let poses = crate::transformer::intermediate_poses(view.pose, target_pose, n);
    let (w, h) = (view.image.width(), view.image.height());
    let mut current = view.clone();
    for (p, pose) in path.iter().zip(poses) {
        let mut target = RenderTarget {
            landmarks: p.clone(),
            heatmap: None,
            pose: Some(pose),
        };
        if heatmaps {
            target = target.with_heatmap(h, w)?;
        }
        current.image = renderer.render(&current, &target)?;
        current.landmarks = p.clone();
        current.pose = pose;
    }
    Ok(Reenactment {
        image: current.image,
        landmarks: path,
    })
}
