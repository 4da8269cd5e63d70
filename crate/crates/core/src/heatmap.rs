//! Sub-pixel landmark heatmap codec.
//!
//! Decoding normalizes each channel by its maximum, drops everything below
//! one half and takes the weighted centroid of the surviving pixel centers.
//! Encoding builds a cone around each landmark in coordinates normalized to
//! the unit square, raises it to the 8th power and keeps only the part above
//! the support threshold `t`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{ImageBuffer, LandmarkSet, Point2};
use crate::wflw::NUM_LANDMARKS;

/// Support threshold used for all renderer conditioning.
pub const SUPPORT_THRESHOLD: f64 = 0.8;

/// Normalized activations below this are discarded by the decoder.
pub const DECODE_CUTOFF: f64 = 0.5;

/// `C×H×W` activation volume in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVolume<T: Real> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> ActivationVolume<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(channels * height * width, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("activation volume"));
        }
        Ok(ActivationVolume {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ActivationVolume {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Every value multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        ActivationVolume {
            data: self.data.iter().map(|&v| v * s).collect(),
            ..self.clone()
        }
    }
}

/// Landmark heatmap with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T: Real> {
    volume: ActivationVolume<T>,
    threshold: T,
}

impl<T: Real> std::ops::Deref for Heatmap<T> {
    type Target = ActivationVolume<T>;
    fn deref(&self) -> &Self::Target {
        &self.volume
    }
}

impl<T: Real> Heatmap<T> {
    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn as_volume(&self) -> &ActivationVolume<T> {
        &self.volume
    }

    /// Number of non-zero pixels in channel `c`.
    pub fn support(&self, c: usize) -> usize {
        self.channel(c).iter().filter(|&&v| v > T::zero()).count()
    }

    /// Per-pixel maximum over channels.
    pub fn max_projection(&self) -> ImageBuffer<T> {
        let (h, w) = (self.height(), self.width());
        ImageBuffer::from_fn(w, h, 1, |x, y, _| {
            (0..self.channels()).map(|c| self.get(c, y, x)).fold(T::zero(), T::max)
        })
    }

    /// Debug dump: one gray PNG per channel, `channel_NN.png`.
    pub fn save_channels(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let (h, w) = (self.height(), self.width());
        for c in 0..self.channels() {
            let img = ImageBuffer::from_fn(w, h, 1, |x, y, _| self.get(c, y, x));
            crate::io::save_image(&img, dir.join(format!("channel_{c:02}.png")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedLandmarks<T: Real> {
    pub landmarks: LandmarkSet<T>,
    /// Channels with no positive activation; decoded as the argmax pixel center.
    pub fallback: Vec<usize>,
}

/// Grid that normalized activations are snapped to before thresholding.
///
/// Snapping makes the decoded point depend only on the ratios `A / max A`
/// rounded to this grid, so rescaling the volume gives a bit-identical
/// result; all sums over snapped weights are exact.
fn weight_quantum<T: Real>() -> T {
    let bits = (T::epsilon().log2() / T::lit(2.0)).floor();
    T::lit(2.0).powf(bits)
}

/// Decodes one landmark per channel from an activation volume.
pub fn decode_landmarks<T: Real>(a: &ActivationVolume<T>) -> Result<DecodedLandmarks<T>> {
    if a.channels() != NUM_LANDMARKS {
        return Err(Error::shape(format!("{NUM_LANDMARKS} channels"), a.channels()));
    }
    let (h, w) = (a.height(), a.width());
    let half = T::lit(0.5);
    let cutoff = T::lit(DECODE_CUTOFF);
    let quantum = weight_quantum::<T>();
    let mut points = Vec::with_capacity(NUM_LANDMARKS);
    let mut fallback = Vec::new();

    for c in 0..NUM_LANDMARKS {
        let ch = a.channel(c);
        let (argmax, max) = ch.iter().enumerate().fold(
            (0, T::neg_infinity()),
            |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            },
        );
        let center = |i: usize| Point2::new(T::from_usize_lossy(i % w) + half, T::from_usize_lossy(i / w) + half);
        if !(max > T::zero()) {
            fallback.push(c);
            points.push(center(argmax));
            continue;
        }
        let (mut sw, mut sx, mut sy) = (T::zero(), T::zero(), T::zero());
        for y in 0..h {
            for x in 0..w {
                let q = ((ch[y * w + x] / max) / quantum).round() * quantum;
                if q < cutoff {
                    continue;
                }
                sw += q;
                sx += q * (T::from_usize_lossy(x) + half);
                sy += q * (T::from_usize_lossy(y) + half);
            }
        }
        points.push(Point2::new(sx / sw, sy / sw));
    }
    Ok(DecodedLandmarks {
        landmarks: LandmarkSet::new(points)?,
        fallback,
    })
}

/// Renders `p` into a `98×height×width` heatmap with the default threshold.
pub fn encode_heatmap<T: Real>(p: &LandmarkSet<T>, height: usize, width: usize) -> Result<Heatmap<T>> {
    encode_heatmap_with_threshold(p, height, width, T::lit(SUPPORT_THRESHOLD))
}

pub fn encode_heatmap_with_threshold<T: Real>(
    p: &LandmarkSet<T>,
    height: usize,
    width: usize,
    threshold: T,
) -> Result<Heatmap<T>> {
    if !(threshold >= T::zero() && threshold < T::one()) {
        return Err(Error::invalid("support threshold must lie in [0, 1)"));
    }
    let (wf, hf) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
    if let Some(q) = p
        .points()
        .iter()
        .find(|q| q.x < T::zero() || q.y < T::zero() || q.x > wf || q.y > hf)
    {
        return Err(Error::OutOfBounds {
            x: q.x.as_f64(),
            y: q.y.as_f64(),
            width,
            height,
        });
    }

    let half = T::lit(0.5);
    let sqrt2 = T::SQRT_2();
    let denom = T::one() - threshold;
    // cone^8 > t  <=>  normalized distance < sqrt(2) (1 - t^(1/8))
    let reach = sqrt2 * (T::one() - threshold.powf(T::lit(0.125)));
    let mut volume = ActivationVolume::zeros(NUM_LANDMARKS, height, width);

    for (c, q) in p.points().iter().enumerate() {
        let span = |center: T, extent: T, n: usize| {
            let r = reach * extent + T::one();
            let lo = (center - r - half).floor().max(T::zero()).to_usize().unwrap_or(0);
            let hi = (center + r).ceil().to_usize().unwrap_or(n).min(n);
            lo..hi
        };
        for y in span(q.y, hf, height) {
            let dy = (q.y - (T::from_usize_lossy(y) + half)) / hf;
            for x in span(q.x, wf, width) {
                let dx = (q.x - (T::from_usize_lossy(x) + half)) / wf;
                let cone = T::one() - (dx * dx + dy * dy).sqrt() / sqrt2;
                let v = ((cone.powi(8) - threshold) / denom).max(T::zero());
                volume.set(c, y, x, v.min(T::one()));
            }
        }
    }
    Ok(Heatmap { volume, threshold })
}

/// `decode_landmarks(encode_heatmap(p))`.
pub fn roundtrip<T: Real>(p: &LandmarkSet<T>, height: usize, width: usize) -> Result<LandmarkSet<T>> {
    Ok(decode_landmarks(encode_heatmap(p, height, width)?.as_volume())?.landmarks)
}
