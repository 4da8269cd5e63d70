//! Frame directories: `NNNNN.png` images with `NNNNN.json` annotations and
//! optional segmentation masks named in the annotation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use facepipe_core::io::{image_size, load_image, save_image, save_mask};
use facepipe_core::{BBox, Frame, ImageRef, Landmarks, MaskRef, Point2, Pose, Sequence};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxJson {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl From<Pose> for PoseJson {
    fn from(p: Pose) -> Self {
        PoseJson {
            yaw: p.yaw,
            pitch: p.pitch,
            roll: p.roll,
        }
    }
}

impl From<PoseJson> for Pose {
    fn from(p: PoseJson) -> Self {
        Pose::new(p.yaw, p.pitch, p.roll)
    }
}

/// Per-frame annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub frame: usize,
    pub bbox: BoxJson,
    pub landmarks: Vec<[f64; 2]>,
    pub pose: PoseJson,
    /// Mask PNG, relative to the annotation's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

impl Annotation {
    pub fn from_frame(frame: &Frame, mask: Option<String>) -> Self {
        Annotation {
            version: SCHEMA_VERSION,
            frame: frame.frame,
            bbox: BoxJson {
                cx: frame.bbox.cx,
                cy: frame.bbox.cy,
                w: frame.bbox.w,
                h: frame.bbox.h,
            },
            landmarks: frame.landmarks.points().iter().map(|&p| p.into()).collect(),
            pose: frame.pose.into(),
            mask,
        }
    }

    fn into_frame(self, dir: &Path, image: PathBuf, frame_size: (usize, usize)) -> Result<Frame> {
        if self.version != SCHEMA_VERSION {
            return Err(PipelineError::config(format!(
                "annotation schema version {} is not supported",
                self.version
            )));
        }
        let landmarks = Landmarks::new(self.landmarks.into_iter().map(Point2::from).collect())?;
        let pose = Pose::from(self.pose);
        if !pose.is_finite() {
            return Err(facepipe_core::Error::NonFinite("pose").into());
        }
        Ok(Frame {
            frame: self.frame,
            image: ImageRef::Path(image),
            mask: self.mask.map(|m| MaskRef::Path(dir.join(m))),
            mirrored: false,
            frame_size,
            bbox: BBox::new(self.bbox.cx, self.bbox.cy, self.bbox.w, self.bbox.h)?,
            landmarks,
            pose,
        })
    }
}

/// A frame that could not be used, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIssue {
    pub frame: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    /// Frames whose image and annotation both loaded.
    pub sequence: Sequence,
    pub issues: Vec<FrameIssue>,
}

impl Dataset {
    pub fn image_path(&self, frame: usize) -> PathBuf {
        frame_image_path(&self.dir, frame)
    }
}

pub fn frame_image_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("{frame:05}.png"))
}

pub fn frame_annotation_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("{frame:05}.json"))
}

/// Frame numbers of the `<digits>.png` files in `dir`.
pub fn list_frames(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    if !dir.is_dir() {
        return Err(PipelineError::config(format!("{} is not a directory", dir.display())));
    }
    let mut frames = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(i) = stem.parse() {
                frames.insert(i, path);
            }
        }
    }
    Ok(frames)
}

fn load_frame(dir: &Path, frame: usize, image: PathBuf) -> Result<Frame> {
    let ann_path = frame_annotation_path(dir, frame);
    if !ann_path.exists() {
        return Err(PipelineError::Core(facepipe_core::Error::MissingFile(ann_path)));
    }
    let ann: Annotation = serde_json::from_slice(&std::fs::read(&ann_path)?)?;
    if ann.frame != frame {
        return Err(PipelineError::config(format!(
            "{} says frame {}",
            ann_path.display(),
            ann.frame
        )));
    }
    let size = image_size(&image)?;
    ann.into_frame(dir, image, size)
}

/// Loads every annotated frame of `dir`. Frames with a missing or broken
/// annotation are reported in `issues` and left out of the sequence.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mut frames = Vec::new();
    let mut issues = Vec::new();
    for (i, image) in list_frames(dir)? {
        match load_frame(dir, i, image) {
            Ok(f) => frames.push(f),
            Err(e) => issues.push(FrameIssue {
                frame: i,
                error: e.to_string(),
            }),
        }
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        sequence: Sequence::new(frames)?,
        issues,
    })
}

/// Writes images, masks and annotations so that [`load_dataset`] reads
/// the same sequence back.
pub fn write_dataset(seq: &Sequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in seq.iter() {
        save_image(&f.load_image()?, frame_image_path(dir, f.frame))?;
        let mask = match f.load_mask()? {
            Some(m) => {
                let name = format!("{:05}_mask.png", f.frame);
                save_mask(&m, dir.join(&name))?;
                Some(name)
            }
            None => None,
        };
        let ann = Annotation::from_frame(f, mask);
        std::fs::write(frame_annotation_path(dir, f.frame), serde_json::to_vec_pretty(&ann)?)?;
    }
    Ok(())
}

/// Loads a dataset with all images held in memory.
pub fn preload(seq: &Sequence) -> Result<Sequence> {
    let frames = seq
        .iter()
        .map(|f| {
            let mut g = f.clone();
            g.image = ImageRef::Memory(Arc::new(match &f.image {
                ImageRef::Path(p) => load_image(p)?,
                ImageRef::Memory(m) => (**m).clone(),
            }));
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence::new(frames)?)
}
