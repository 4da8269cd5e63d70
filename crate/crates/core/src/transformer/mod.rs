//! Landmark transformer: source landmarks + target pose → target landmarks.
//!
//! The network sees landmarks normalized to `[-1, 1]` by the frame extent
//! and angles divided by 90°. It is a stack of 12 dense layers (batch norm
//! and ReLU after all but the last) of hidden width 256 by default. The
//! last layer starts at zero and its output is added to a fixed offset,
//! the mean training target, so an untrained model predicts the mean face.

mod checkpoint;
mod edits;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use edits::{intermediate_landmarks, intermediate_poses, swap_mouth_landmarks};
pub use mlp::{Adam, BatchNorm, Dense, Gradients, Mlp, BN_EPS, BN_MOMENTUM};
pub use train::{
    evaluate, identity_baseline_mse, mean_target, train, write_loss_csv, OutputOffset, TrainConfig, Trained,
    TrainingSample,
};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{LandmarkSet, Point2, PoseAngles};
use crate::wflw::NUM_LANDMARKS;

pub const LAYER_COUNT: usize = 12;
pub const HIDDEN_WIDTH: usize = 256;
pub const INPUT_WIDTH: usize = 2 * NUM_LANDMARKS + 3;
pub const OUTPUT_WIDTH: usize = 2 * NUM_LANDMARKS;
pub const ANGLE_SCALE: f64 = 90.0;

/// Anything that can move landmarks to a new head pose.
pub trait LandmarkTransform<T: Real> {
    fn transform(&self, source: &LandmarkSet<T>, pose: &PoseAngles<T>) -> Result<LandmarkSet<T>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTransformer<T: Real> {
    net: Mlp<T>,
    output_offset: Array1<T>,
}

impl<T: Real> MlpTransformer<T> {
    /// Fresh 12-layer model with the given hidden width.
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut widths = vec![INPUT_WIDTH];
        widths.extend(std::iter::repeat_n(hidden, LAYER_COUNT - 1));
        widths.push(OUTPUT_WIDTH);
        MlpTransformer {
            net: Mlp::new(&widths, seed),
            output_offset: Array1::zeros(OUTPUT_WIDTH),
        }
    }

    pub(crate) fn from_parts(net: Mlp<T>, output_offset: Array1<T>) -> Result<Self> {
        if net.layers.len() != LAYER_COUNT {
            return Err(Error::Checkpoint(format!(
                "expected {LAYER_COUNT} layers, found {}",
                net.layers.len()
            )));
        }
        if net.input_width() != INPUT_WIDTH || net.output_width() != OUTPUT_WIDTH {
            return Err(Error::Checkpoint(format!(
                "expected {INPUT_WIDTH} -> {OUTPUT_WIDTH}, found {} -> {}",
                net.input_width(),
                net.output_width()
            )));
        }
        if output_offset.len() != OUTPUT_WIDTH {
            return Err(Error::Checkpoint(format!(
                "output offset has {} entries",
                output_offset.len()
            )));
        }
        for w in net.layers.windows(2) {
            if w[0].rows() != w[1].cols() {
                return Err(Error::Checkpoint("layer widths do not chain".into()));
            }
        }
        let finite = net.layers.iter().all(|l| {
            l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite())
                && l.bn.as_ref().is_none_or(|bn| {
                    bn.gamma
                        .iter()
                        .chain(&bn.beta)
                        .chain(&bn.running_mean)
                        .all(|v| v.is_finite())
                        && bn.running_var.iter().all(|&v| v > T::zero() && v.is_finite())
                })
        });
        if !finite || !output_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Checkpoint(
                "non-finite parameter or non-positive running variance".into(),
            ));
        }
        Ok(MlpTransformer { net, output_offset })
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp<T> {
        &mut self.net
    }

    pub fn output_offset(&self) -> &Array1<T> {
        &self.output_offset
    }

    pub(crate) fn set_output_offset(&mut self, offset: Array1<T>) {
        self.output_offset = offset;
    }

    pub fn hidden_width(&self) -> usize {
        self.net.layers[0].rows()
    }

    /// Network input row for one sample.
    pub fn encode_input(source: &LandmarkSet<T>, pose: &PoseAngles<T>) -> Result<Vec<T>> {
        if !pose.is_finite() {
            return Err(Error::NonFinite("target pose"));
        }
        let scale = T::lit(ANGLE_SCALE);
        let mut row = source.to_flat();
        row.extend(pose.to_array().map(|a| a / scale));
        Ok(row)
    }

    /// Predicts normalized landmarks for a batch; inference-mode batch norm.
    pub fn forward_batch(&self, inputs: &Array2<T>) -> Array2<T> {
        self.net.forward(inputs) + &self.output_offset
    }

    /// Single prediction in normalized coordinates.
    pub fn forward(&self, source: &LandmarkSet<T>, pose: &PoseAngles<T>) -> Result<LandmarkSet<T>> {
        let row = Self::encode_input(source, pose)?;
        let x = Array2::from_shape_vec((1, INPUT_WIDTH), row).expect("input width");
        let out = self.forward_batch(&x);
        LandmarkSet::from_flat(out.row(0).as_slice().expect("contiguous row"))
    }

    /// Prediction for landmarks given in pixels of a `width`×`height` frame.
    pub fn predict_pixels(
        &self,
        source: &LandmarkSet<T>,
        pose: &PoseAngles<T>,
        width: usize,
        height: usize,
    ) -> Result<LandmarkSet<T>> {
        let out = self.forward(&normalize_landmarks(source, width, height)?, pose)?;
        denormalize_landmarks(&out, width, height)
    }

    /// Adapter that works in pixel coordinates of a fixed frame size.
    pub fn in_frame(&self, width: usize, height: usize) -> InFrame<'_, T> {
        InFrame {
            model: self,
            width,
            height,
        }
    }
}

impl<T: Real> LandmarkTransform<T> for MlpTransformer<T> {
    fn transform(&self, source: &LandmarkSet<T>, pose: &PoseAngles<T>) -> Result<LandmarkSet<T>> {
        self.forward(source, pose)
    }
}

/// [`MlpTransformer`] bound to a frame size; consumes and yields pixels.
#[derive(Debug, Clone, Copy)]
pub struct InFrame<'a, T: Real> {
    pub model: &'a MlpTransformer<T>,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> LandmarkTransform<T> for InFrame<'_, T> {
    fn transform(&self, source: &LandmarkSet<T>, pose: &PoseAngles<T>) -> Result<LandmarkSet<T>> {
        self.model.predict_pixels(source, pose, self.width, self.height)
    }
}

/// Pixels → `[-1, 1]` by frame extent.
pub fn normalize_landmarks<T: Real>(p: &LandmarkSet<T>, width: usize, height: usize) -> Result<LandmarkSet<T>> {
    let two = T::lit(2.0);
    let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
    p.map(|q| Point2::new(two * q.x / w - T::one(), two * q.y / h - T::one()))
}

pub fn denormalize_landmarks<T: Real>(p: &LandmarkSet<T>, width: usize, height: usize) -> Result<LandmarkSet<T>> {
    let half = T::lit(0.5);
    let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
    p.map(|q| Point2::new((q.x + T::one()) * half * w, (q.y + T::one()) * half * h))
}
