//! End-to-end runs: face swap, pose-only and expression-only reenactment.

use std::path::{Path, PathBuf};

use facepipe_core::appearance::{interpolate_views, mirror_fill, prune_blurry, prune_views, AppearanceMap, ViewAnswer};
use facepipe_core::blend::{paste_back, poisson_solve, soft_erode, PoissonProblem};
use facepipe_core::geometry::Affine2;
use facepipe_core::imageops::{crop, crop_mask, landmarks_to_crop, rotate_about_center};
use facepipe_core::io::save_image;
use facepipe_core::metrics::{l1_distance, FrameMetrics, MetricReport};
use facepipe_core::render::{reenact_iterative, renderer_by_name, RenderTarget, Renderer, View};
use facepipe_core::synth::{convex_hull, point_in_polygon};
use facepipe_core::tracking::smooth_sequence;
use facepipe_core::transformer::{load_checkpoint, swap_mouth_landmarks, MlpTransformer};
use facepipe_core::{binary_face_mask, BBox, Frame, Image, Landmarks, Point2, Pose, Sequence};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataset::{frame_image_path, load_dataset, FrameIssue};
use crate::error::{PipelineError, Result};

/// Smooths, optionally drops blurry views, fills in mirrored views when all
/// yaws share a sign, prunes near-duplicate poses and triangulates.
pub fn build_appearance_map(source: &Sequence, cfg: &PipelineConfig) -> Result<AppearanceMap<f64>> {
    let mut seq = smooth_sequence(source, &cfg.smoothing.params())?;
    if let Some(t) = cfg.blur_threshold {
        seq = prune_blurry(&seq, t)?;
    }
    let seq = prune_views(&mirror_fill(&seq), cfg.prune_radius);
    Ok(AppearanceMap::build(&seq)?)
}

/// Runs a renderer `n` times along the landmark transformer path instead
/// of once.
struct Iterative<'a> {
    inner: &'a dyn Renderer<f64>,
    model: &'a MlpTransformer<f64>,
    n: usize,
}

impl Renderer<f64> for Iterative<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn supports_heatmap_conditioning(&self) -> bool {
        self.inner.supports_heatmap_conditioning()
    }

    fn render(&self, view: &View<f64>, target: &RenderTarget<f64>) -> facepipe_core::Result<Image> {
        let pose = target.pose.ok_or_else(|| facepipe_core::Error::Render {
            renderer: self.name().into(),
            reason: "iterative reenactment needs the target pose".into(),
        })?;
        let (w, h) = (view.image.width(), view.image.height());
        let t = self.model.in_frame(w, h);
        Ok(reenact_iterative(self.inner, &t, view, pose, self.n, Some(&target.landmarks), true)?.image)
    }
}

/// Binary face mask of a frame in crop pixels: the segmentation face label
/// when there is a mask, else the convex hull of the landmarks.
pub fn face_mask_crop(frame: &Frame, size: usize) -> Result<Image> {
    if let Some(mask) = frame.load_mask()? {
        return Ok(binary_face_mask(&crop_mask(&mask, &frame.bbox, size)));
    }
    let lm = landmarks_to_crop(&frame.landmarks, &frame.bbox, size)?;
    let hull = convex_hull(lm.points());
    Ok(Image::from_fn(size, size, 1, |x, y, _| {
        let c = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
        if point_in_polygon(c, &hull) {
            1.0
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendStats {
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub clamped: usize,
    pub max_clamp: f64,
}

/// Poisson-blends `rendered` into the crop of `frame_img` under `mask`,
/// softens the mask and pastes the result back into the full frame.
pub fn blend_into_frame(
    frame_img: &Image,
    bbox: &BBox,
    rendered: &Image,
    mask: &Image,
    cfg: &PipelineConfig,
) -> Result<(Image, BlendStats)> {
    let target = crop(frame_img, bbox, cfg.crop_size);
    let rendered = if rendered.channels() == target.channels() {
        rendered.clone()
    } else {
        rendered.to_rgb()
    };
    let problem = PoissonProblem {
        target: &target,
        guidance: &rendered,
        mask,
        tolerance: cfg.blend_tolerance,
        max_iterations: cfg.blend_max_iterations,
    };
    let solution = poisson_solve(&problem)?;
    let soft = soft_erode(mask, cfg.erode_width)?;
    let out = paste_back(frame_img, &solution.image, &soft, bbox)?;
    let stats = BlendStats {
        iterations: solution.channels.iter().map(|c| c.iterations).collect(),
        residuals: solution.channels.iter().map(|c| c.residual).collect(),
        clamped: solution.clamped,
        max_clamp: solution.max_clamp,
    };
    Ok((out, stats))
}

/// Appearance map of one source plus the renderer that draws from it.
pub struct SwapEngine {
    map: AppearanceMap<f64>,
    renderer: Box<dyn Renderer<f64>>,
    transformer: Option<MlpTransformer<f64>>,
    cfg: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct SwappedFrame {
    pub image: Image,
    pub answer: ViewAnswer<f64>,
    pub blend: BlendStats,
}

impl SwapEngine {
    pub fn new(source: &Sequence, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let map = build_appearance_map(source, cfg)?;
        Self::from_map(map, cfg)
    }

    pub fn from_map(map: AppearanceMap<f64>, cfg: &PipelineConfig) -> Result<Self> {
        let renderer = renderer_by_name(&cfg.renderer).map_err(|e| PipelineError::config(e.to_string()))?;
        let transformer = match &cfg.transformer {
            Some(p) if cfg.iterations > 1 => Some(load_checkpoint(p)?),
            _ => None,
        };
        Ok(SwapEngine {
            map,
            renderer,
            transformer,
            cfg: cfg.clone(),
        })
    }

    pub fn map(&self) -> &AppearanceMap<f64> {
        &self.map
    }

    pub fn renderer(&self) -> &dyn Renderer<f64> {
        self.renderer.as_ref()
    }

    /// Views around the pose of `target`, rendered to its landmarks and
    /// conditioned on their heatmap, in crop pixels.
    pub fn render_for(&self, target: &Frame) -> Result<(Image, ViewAnswer<f64>)> {
        let size = self.cfg.crop_size;
        let answer = self.map.locate(&target.pose)?;
        let landmarks = landmarks_to_crop(&target.landmarks, &target.bbox, size)?;
        let goal = RenderTarget {
            landmarks,
            heatmap: None,
            pose: Some(target.pose),
        }
        .with_heatmap(size, size)?;
        let image = match &self.transformer {
            Some(model) => {
                let it = Iterative {
                    inner: self.renderer.as_ref(),
                    model,
                    n: self.cfg.iterations,
                };
                interpolate_views(&self.map, &answer, &it, &goal, size)?
            }
            None => interpolate_views(&self.map, &answer, self.renderer.as_ref(), &goal, size)?,
        };
        Ok((image, answer))
    }

    pub fn swap_frame(&self, target: &Frame) -> Result<SwappedFrame> {
        let (rendered, answer) = self.render_for(target)?;
        let frame_img = target.load_image()?;
        let mask = face_mask_crop(target, self.cfg.crop_size)?;
        let (image, blend) = blend_into_frame(&frame_img, &target.bbox, &rendered, &mask, &self.cfg)?;
        Ok(SwappedFrame { image, answer, blend })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: usize,
    /// File name inside the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triangle: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub weights: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blend: Option<BlendStats>,
}

impl FrameResult {
    fn failed(frame: usize, error: String) -> Self {
        FrameResult {
            frame,
            output: None,
            error: Some(error),
            triangle: None,
            weights: Vec::new(),
            blend: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub frames: Vec<FrameResult>,
    pub report: MetricReport,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| f.error.is_some()).count()
    }

    /// 0 when every frame succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            1
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        std::fs::write(dir.join("report.csv"), self.report.to_csv())?;
        Ok(())
    }
}

fn finish(
    mut frames: Vec<FrameResult>,
    issues: Vec<FrameIssue>,
    metrics: Vec<FrameMetrics>,
    out: &Path,
) -> Result<RunSummary> {
    frames.extend(issues.into_iter().map(|i| FrameResult::failed(i.frame, i.error)));
    frames.sort_by_key(|f| f.frame);
    let summary = RunSummary {
        version: 1,
        frames,
        report: MetricReport::new(metrics, None),
    };
    summary.write(out)?;
    Ok(summary)
}

/// Swaps the source face into every target frame and writes
/// `NNNNN.png`, `report.json` and `report.csv` to the output directory.
/// Frames that fail are recorded and skipped.
pub fn run_swap(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let target_dir = cfg
        .target
        .as_ref()
        .ok_or_else(|| PipelineError::config("swap needs a target directory"))?;
    let source = load_dataset(&cfg.source)?;
    if source.sequence.is_empty() {
        return Err(PipelineError::config(format!(
            "no usable frames in {}",
            cfg.source.display()
        )));
    }
    let target = load_dataset(target_dir)?;
    let engine = SwapEngine::new(&source.sequence, cfg)?;
    std::fs::create_dir_all(&cfg.output)?;
    let tracked = smooth_sequence(&target.sequence, &cfg.smoothing.params())?;

    let results: Vec<(FrameResult, Option<FrameMetrics>)> = tracked
        .frames()
        .par_iter()
        .map(|f| {
            let run = || -> Result<(FrameResult, FrameMetrics)> {
                let swapped = engine.swap_frame(f)?;
                let path = frame_image_path(&cfg.output, f.frame);
                save_image(&swapped.image, &path)?;
                let l1 = l1_distance(&swapped.image, &f.load_image()?)?;
                let res = FrameResult {
                    frame: f.frame,
                    output: path.file_name().map(PathBuf::from),
                    error: None,
                    triangle: Some(swapped.answer.triangle),
                    weights: swapped.answer.weights.clone(),
                    blend: Some(swapped.blend),
                };
                Ok((
                    res,
                    FrameMetrics {
                        frame: f.frame,
                        l1: Some(l1),
                        ..Default::default()
                    },
                ))
            };
            match run() {
                Ok((r, m)) => (r, Some(m)),
                Err(e) => (FrameResult::failed(f.frame, e.to_string()), None),
            }
        })
        .collect();
    let (frames, metrics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    finish(
        frames,
        target.issues,
        metrics.into_iter().flatten().collect(),
        &cfg.output,
    )
}

/// An interpolated view at a requested pose.
#[derive(Debug, Clone)]
pub struct PoseView {
    pub image: Image,
    /// Crop pixels, after roll alignment.
    pub landmarks: Landmarks,
    pub answer: ViewAnswer<f64>,
    /// Rotation applied to match the requested roll, in degrees.
    pub roll_delta: f64,
}

/// Renders the views around `pose` to their barycentric landmark blend,
/// mixes them, then rotates image and landmarks about the crop center by
/// the difference between the requested and the blended roll.
pub fn render_pose(
    map: &AppearanceMap<f64>,
    renderer: &dyn Renderer<f64>,
    pose: &Pose,
    size: usize,
) -> Result<PoseView> {
    if !pose.is_finite() {
        return Err(facepipe_core::Error::NonFinite("pose").into());
    }
    let answer = map.locate(pose)?;
    let mut blended = vec![Point2::new(0.0, 0.0); 98];
    let mut roll = 0.0;
    for &(v, w) in &answer.weights {
        let view = map.view(v).expect("weighted vertices carry views");
        let lm = landmarks_to_crop(&view.landmarks, &view.bbox, size)?;
        for (acc, &p) in blended.iter_mut().zip(lm.points()) {
            *acc = *acc + p * w;
        }
        roll += w * view.pose.roll;
    }
    let landmarks = Landmarks::new(blended)?;
    let goal = RenderTarget {
        landmarks,
        heatmap: None,
        pose: Some(Pose::new(pose.yaw, pose.pitch, roll)),
    }
    .with_heatmap(size, size)?;
    let image = interpolate_views(map, &answer, renderer, &goal, size)?;
    let delta = pose.roll - roll;
    if delta == 0.0 {
        return Ok(PoseView {
            image,
            landmarks: goal.landmarks,
            answer,
            roll_delta: 0.0,
        });
    }
    let half = size as f64 / 2.0;
    let rot = Affine2::rotation_about(Point2::new(half, half), delta);
    Ok(PoseView {
        image: rotate_about_center(&image, delta),
        landmarks: goal.landmarks.map(|p| rot.apply(p))?,
        answer,
        roll_delta: delta,
    })
}

/// [`render_pose`] along a path. An empty path yields no frames.
pub fn run_pose_reenact(
    map: &AppearanceMap<f64>,
    renderer: &dyn Renderer<f64>,
    path: &[Pose],
    size: usize,
) -> Result<Vec<PoseView>> {
    path.par_iter().map(|p| render_pose(map, renderer, p, size)).collect()
}

/// Parses `yaw,pitch,roll;yaw,pitch,roll;...`.
pub fn parse_pose_path(text: &str) -> Result<Vec<Pose>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let v: Vec<f64> = item
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| PipelineError::config(format!("bad pose {item:?}: {e}")))?;
            match v[..] {
                [yaw, pitch, roll] => Ok(Pose::new(yaw, pitch, roll)),
                [yaw, pitch] => Ok(Pose::new(yaw, pitch, 0.0)),
                _ => Err(PipelineError::config(format!(
                    "bad pose {item:?}: expected yaw,pitch[,roll]"
                ))),
            }
        })
        .collect()
}

/// Builds the map of `cfg.source` and writes one PNG per pose of `path`.
pub fn run_pose_path(cfg: &PipelineConfig, path: &[Pose]) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let source = load_dataset(&cfg.source)?;
    if source.sequence.is_empty() {
        return Err(PipelineError::config(format!(
            "no usable frames in {}",
            cfg.source.display()
        )));
    }
    let map = build_appearance_map(&source.sequence, cfg)?;
    let renderer = renderer_by_name(&cfg.renderer).map_err(|e| PipelineError::config(e.to_string()))?;
    let views = run_pose_reenact(&map, renderer.as_ref(), path, cfg.crop_size)?;
    std::fs::create_dir_all(&cfg.output)?;
    views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = frame_image_path(&cfg.output, i);
            save_image(&v.image, &p)?;
            Ok(p)
        })
        .collect()
}

/// Re-renders each target frame with the mouth landmarks of the source
/// frame at the same position in the sequence, then blends it back.
pub fn run_expression(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let target_dir = cfg
        .target
        .as_ref()
        .ok_or_else(|| PipelineError::config("expression reenactment needs a target"))?;
    let source = load_dataset(&cfg.source)?;
    let target = load_dataset(target_dir)?;
    if source.sequence.is_empty() {
        return Err(PipelineError::config(format!(
            "no usable frames in {}",
            cfg.source.display()
        )));
    }
    let renderer = renderer_by_name(&cfg.renderer).map_err(|e| PipelineError::config(e.to_string()))?;
    std::fs::create_dir_all(&cfg.output)?;
    let params = cfg.smoothing.params();
    let (src, tgt) = (
        smooth_sequence(&source.sequence, &params)?,
        smooth_sequence(&target.sequence, &params)?,
    );
    let size = cfg.crop_size;

    let results: Vec<(FrameResult, Option<FrameMetrics>)> = tgt
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let run = || -> Result<(FrameResult, FrameMetrics)> {
                let s = src
                    .frames()
                    .get(i)
                    .ok_or_else(|| PipelineError::config("source has fewer frames than target"))?;
                let edited = swap_mouth_landmarks(&t.landmarks, &s.landmarks)?;
                let frame_img = t.load_image()?;
                let view = View {
                    image: crop(&frame_img, &t.bbox, size),
                    landmarks: landmarks_to_crop(&t.landmarks, &t.bbox, size)?,
                    pose: t.pose,
                };
                let goal = RenderTarget {
                    landmarks: landmarks_to_crop(&edited, &t.bbox, size)?,
                    heatmap: None,
                    pose: Some(t.pose),
                }
                .with_heatmap(size, size)?;
                let rendered = renderer.render(&view, &goal)?;
                let mask = face_mask_crop(t, size)?;
                let (image, blend) = blend_into_frame(&frame_img, &t.bbox, &rendered, &mask, cfg)?;
                let path = frame_image_path(&cfg.output, t.frame);
                save_image(&image, &path)?;
                let l1 = l1_distance(&image, &frame_img)?;
                let res = FrameResult {
                    frame: t.frame,
                    output: path.file_name().map(PathBuf::from),
                    error: None,
                    triangle: None,
                    weights: Vec::new(),
                    blend: Some(blend),
                };
                Ok((
                    res,
                    FrameMetrics {
                        frame: t.frame,
                        l1: Some(l1),
                        ..Default::default()
                    },
                ))
            };
            match run() {
                Ok((r, m)) => (r, Some(m)),
                Err(e) => (FrameResult::failed(t.frame, e.to_string()), None),
            }
        })
        .collect();
    let (frames, metrics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    finish(
        frames,
        target.issues,
        metrics.into_iter().flatten().collect(),
        &cfg.output,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_paths_parse() {
        let p = parse_pose_path("10,5,1; -3,2").unwrap();
        assert_eq!(p, [Pose::new(10.0, 5.0, 1.0), Pose::new(-3.0, 2.0, 0.0)]);
        assert!(parse_pose_path("").unwrap().is_empty());
        assert!(parse_pose_path("1").is_err());
        assert!(parse_pose_path("a,b").is_err());
    }
}
