//! Minibatch training of [`MlpTransformer`] with Adam.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::Adam;
use super::{MlpTransformer, HIDDEN_WIDTH, INPUT_WIDTH, OUTPUT_WIDTH};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{LandmarkSet, PoseAngles};

/// One `(p_s, θ_t, p_t)` triple, landmarks already in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample<T: Real> {
    pub source: LandmarkSet<T>,
    pub pose: PoseAngles<T>,
    pub target: LandmarkSet<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub hidden: usize,
    /// Halve the learning rate every this many steps.
    pub halve_lr_every: Option<usize>,
    pub output_offset: OutputOffset,
}

/// Constant added to the network output, in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputOffset {
    Zero,
    /// Mean target of the training set.
    TrainingMean,
    /// Given values (for example the mean of a larger corpus).
    Fixed(Vec<f64>),
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 32,
            iterations: 2000,
            seed: 0,
            hidden: HIDDEN_WIDTH,
            halve_lr_every: None,
            output_offset: OutputOffset::TrainingMean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::invalid("batch size and hidden width must be positive"));
        }
        if let OutputOffset::Fixed(v) = &self.output_offset {
            if v.len() != OUTPUT_WIDTH || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "output offset needs {OUTPUT_WIDTH} finite values"
                )));
            }
        }
        if self.halve_lr_every == Some(0) {
            return Err(Error::invalid("halve_lr_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained<T: Real> {
    pub model: MlpTransformer<T>,
    /// Training-mode minibatch loss per step.
    pub losses: Vec<T>,
}

fn stack<T: Real>(samples: &[&TrainingSample<T>]) -> Result<(Array2<T>, Array2<T>)> {
    let mut x = Array2::zeros((samples.len(), INPUT_WIDTH));
    let mut y = Array2::zeros((samples.len(), OUTPUT_WIDTH));
    for (i, s) in samples.iter().enumerate() {
        let row = MlpTransformer::encode_input(&s.source, &s.pose)?;
        x.row_mut(i).assign(&Array1::from(row));
        y.row_mut(i).assign(&Array1::from(s.target.to_flat()));
    }
    Ok((x, y))
}

/// Fits `L = 1/n Σ ‖T(p_s, θ_t) − p_t‖²` over shuffled minibatches.
pub fn train<T: Real>(samples: &[TrainingSample<T>], config: &TrainConfig) -> Result<Trained<T>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = MlpTransformer::new(config.hidden, config.seed);
    match &config.output_offset {
        OutputOffset::Zero => {}
        OutputOffset::TrainingMean => {
            let (_, y) = stack(&samples.iter().collect::<Vec<_>>())?;
            model.set_output_offset(y.mean_axis(Axis(0)).expect("non-empty"));
        }
        OutputOffset::Fixed(v) => model.set_output_offset(v.iter().map(|&x| T::lit(x)).collect()),
    }
    let offset = model.output_offset().clone();
    let mut adam = Adam::new(T::lit(config.learning_rate), T::lit(config.beta1), T::lit(config.beta2));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let batch = config.batch_size.min(samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(config.iterations);

    for step in 0..config.iterations {
        if let Some(every) = config.halve_lr_every {
            if step > 0 && step % every == 0 {
                adam.lr = adam.lr * T::lit(0.5);
            }
        }
        let mut picked = Vec::with_capacity(batch);
        while picked.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picked.push(&samples[order[cursor]]);
            cursor += 1;
        }
        let (x, y) = stack(&picked)?;
        let y = y - &offset;
        let (loss, grads) = model.net_mut().loss_and_gradients(&x, &y, true);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: loss.as_f64(),
            });
        }
        losses.push(loss);
        adam.step(model.net_mut(), &grads);
    }
    Ok(Trained { model, losses })
}

/// Inference-mode mean squared error over `samples`.
pub fn evaluate<T: Real>(model: &MlpTransformer<T>, samples: &[TrainingSample<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let (x, y) = stack(&samples.iter().collect::<Vec<_>>())?;
    let out = model.forward_batch(&x);
    Ok((&out - &y).mapv(|v| v * v).sum() / T::from_usize_lossy(samples.len()))
}

/// Mean target over `samples`.
pub fn mean_target<T: Real>(samples: &[TrainingSample<T>]) -> Vec<f64> {
    let mut acc = vec![0.0; OUTPUT_WIDTH];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(s.target.to_flat()) {
            *a += v.as_f64();
        }
    }
    acc.iter().map(|a| a / samples.len().max(1) as f64).collect()
}

/// MSE of predicting `p_t = p_s`.
pub fn identity_baseline_mse<T: Real>(samples: &[TrainingSample<T>]) -> T {
    let total: T = samples
        .iter()
        .map(|s| {
            s.source
                .points()
                .iter()
                .zip(s.target.points())
                .map(|(a, b)| (*a - *b).norm_sq())
                .sum::<T>()
        })
        .sum();
    total / T::from_usize_lossy(samples.len().max(1))
}

/// Writes `step,mse` rows.
pub fn write_loss_csv<T: Real>(path: &Path, losses: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,mse")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{}", i, l.as_f64())?;
    }
    out.flush()?;
    Ok(())
}
