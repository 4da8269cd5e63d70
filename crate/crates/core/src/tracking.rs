//! Detection grouping and motion-adaptive temporal smoothing.
//!
//! Smoothing blends each sample with a centered moving average. The blend
//! weight falls off exponentially with the speed of the group, so slow
//! jitter is averaged away while fast motion passes through without lag:
//!
//! `w_t = min_weight + (1 - min_weight) * exp(-|v_t| / motion_scale)`
//! `out_t = w_t * avg_t + (1 - w_t) * x_t`

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{iou, BoundingBox, FrameRecord, FrameSequence, LandmarkSet, Point2};
use crate::wflw::PARTS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams<T: Real> {
    /// Blend weight reached under very fast motion, in `(0, 1]`.
    pub min_weight: T,
    /// Speed (pixels per frame) at which the extra weight decays by `1/e`.
    pub motion_scale: T,
    /// Odd window length in frames.
    pub window: usize,
}

impl<T: Real> Default for SmoothingParams<T> {
    fn default() -> Self {
        SmoothingParams {
            min_weight: T::lit(0.15),
            motion_scale: T::lit(2.0),
            window: 5,
        }
    }
}

impl<T: Real> SmoothingParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_weight > T::zero() && self.min_weight <= T::one()) {
            return Err(Error::invalid("min_weight must lie in (0, 1]"));
        }
        if !(self.motion_scale > T::zero()) {
            return Err(Error::invalid("motion_scale must be positive"));
        }
        if self.window % 2 == 0 {
            return Err(Error::invalid("smoothing window must be odd"));
        }
        Ok(())
    }
}

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.75;

/// Groups per-frame detections into tracks.
///
/// A track stays open while its last detection came from the previous
/// frame. Each detection joins the open track whose last box overlaps it
/// most (IoU strictly above `threshold`); ties go to the older track.
/// Assignment is greedy over all candidate pairs of a frame in order of
/// decreasing IoU, so a track takes at most one detection per frame.
pub fn group_detections<T: Real>(frames: &[Vec<FrameRecord<T>>], threshold: T) -> Vec<FrameSequence<T>> {
    let mut seqs: Vec<FrameSequence<T>> = Vec::new();
    let mut open: Vec<usize> = Vec::new();

    for dets in frames {
        let mut pairs: Vec<(T, usize, usize)> = Vec::new();
        for &si in &open {
            let last = seqs[si].last().expect("open tracks are non-empty");
            for (di, d) in dets.iter().enumerate() {
                let o = iou(&last.bbox, &d.bbox);
                if o > threshold {
                    pairs.push((o, si, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut det_taken = vec![false; dets.len()];
        let mut seq_taken = vec![false; seqs.len()];
        let mut next_open = Vec::new();
        for (_, si, di) in pairs {
            if det_taken[di] || seq_taken[si] {
                continue;
            }
            det_taken[di] = true;
            seq_taken[si] = true;
            seqs[si].push(dets[di].clone());
            next_open.push(si);
        }
        for (d, _) in dets.iter().zip(&det_taken).filter(|(_, &taken)| !taken) {
            next_open.push(seqs.len());
            seqs.push(FrameSequence::new(vec![d.clone()]).expect("single frame"));
        }
        next_open.sort_unstable();
        open = next_open;
    }
    seqs
}

fn group_mean<T: Real>(points: &[Point2<T>]) -> Point2<T> {
    let n = T::from_usize_lossy(points.len());
    let (sx, sy) = points
        .iter()
        .fold((T::zero(), T::zero()), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

/// Per-frame blend weights from the finite-difference speed of the group mean.
pub fn motion_weights<T: Real>(signal: &[Vec<Point2<T>>], params: &SmoothingParams<T>) -> Vec<T> {
    let means: Vec<Point2<T>> = signal.iter().map(|s| group_mean(s)).collect();
    let n = means.len();
    (0..n)
        .map(|t| {
            let speed = match (t, n) {
                (_, 0 | 1) => T::zero(),
                (0, _) => means[1].dist(means[0]),
                _ => means[t].dist(means[t - 1]),
            };
            params.min_weight + (T::one() - params.min_weight) * (-speed / params.motion_scale).exp()
        })
        .collect()
}

/// Smooths a series of point groups (one group of equal size per frame).
///
/// The window is truncated at the sequence ends.
pub fn motion_adaptive_smooth<T: Real>(signal: &[Vec<Point2<T>>], params: &SmoothingParams<T>) -> Vec<Vec<Point2<T>>> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let k = signal[0].len();
    assert!(signal.iter().all(|s| s.len() == k), "groups must have equal size");
    let weights = motion_weights(signal, params);
    let half = params.window / 2;

    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            let count = T::from_usize_lossy(hi - lo + 1);
            let w = weights[t];
            (0..k)
                .map(|i| {
                    let x = signal[t][i];
                    // deviations keep constant signals bit-exact
                    let (mut dx, mut dy) = (T::zero(), T::zero());
                    for s in &signal[lo..=hi] {
                        dx += s[i].x - x.x;
                        dy += s[i].y - x.y;
                    }
                    Point2::new(x.x + w * (dx / count), x.y + w * (dy / count))
                })
                .collect()
        })
        .collect()
}

/// Smooths box centers, box sizes and every face part independently.
pub fn smooth_sequence<T: Real>(seq: &FrameSequence<T>, params: &SmoothingParams<T>) -> Result<FrameSequence<T>> {
    params.validate()?;
    let frames = seq.frames();
    if frames.is_empty() {
        return Ok(FrameSequence::empty());
    }
    let centers: Vec<Vec<Point2<T>>> = frames.iter().map(|f| vec![Point2::new(f.bbox.cx, f.bbox.cy)]).collect();
    let sizes: Vec<Vec<Point2<T>>> = frames.iter().map(|f| vec![Point2::new(f.bbox.w, f.bbox.h)]).collect();
    let centers = motion_adaptive_smooth(&centers, params);
    let sizes = motion_adaptive_smooth(&sizes, params);

    let mut points: Vec<Vec<Point2<T>>> = frames.iter().map(|f| f.landmarks.points().to_vec()).collect();
    for part in PARTS {
        let series: Vec<Vec<Point2<T>>> = frames
            .iter()
            .map(|f| f.landmarks.points()[part.clone()].to_vec())
            .collect();
        for (t, group) in motion_adaptive_smooth(&series, params).into_iter().enumerate() {
            points[t][part.clone()].copy_from_slice(&group);
        }
    }

    let out = frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut rec = f.clone();
            rec.bbox = BoundingBox::new(centers[t][0].x, centers[t][0].y, sizes[t][0].x, sizes[t][0].y)?;
            rec.landmarks = LandmarkSet::new(std::mem::take(&mut points[t]))?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ImageRef, PoseAngles};

    fn series(xs: &[f64]) -> Vec<Vec<Point2<f64>>> {
        xs.iter().map(|&x| vec![Point2::new(x, 0.0)]).collect()
    }

    fn xs(s: &[Vec<Point2<f64>>]) -> Vec<f64> {
        s.iter().map(|g| g[0].x).collect()
    }

    pub(crate) fn record(frame: usize, bbox: BoundingBox<f64>) -> FrameRecord<f64> {
        FrameRecord {
            frame,
            image: ImageRef::Path(format!("{frame}.png").into()),
            mask: None,
            mirrored: false,
            frame_size: (640, 480),
            bbox,
            landmarks: LandmarkSet::new(vec![Point2::new(bbox.cx, bbox.cy); 98]).unwrap(),
            pose: PoseAngles::default(),
        }
    }

    fn square(cx: f64, cy: f64, side: f64) -> BoundingBox<f64> {
        BoundingBox::new(cx, cy, side, side).unwrap()
    }

    #[test]
    fn static_box_forms_one_track() {
        let frames: Vec<_> = (0..5).map(|t| vec![record(t, square(50.0, 50.0, 20.0))]).collect();
        let seqs = group_detections(&frames, 0.75);
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].len(), 5);
    }

    #[test]
    fn distant_boxes_form_two_tracks() {
        let frames: Vec<_> = (0..4)
            .map(|t| {
                vec![
                    record(t, square(50.0, 50.0, 20.0)),
                    record(t, square(300.0, 50.0, 20.0)),
                ]
            })
            .collect();
        let seqs = group_detections(&frames, 0.75);
        assert_eq!(seqs.len(), 2);
        assert!(seqs.iter().all(|s| s.len() == 4));
    }

    #[test]
    fn drifting_box_stays_one_track() {
        // shifted 100x100 squares: IoU = 99*100 / (2*10000 - 9900) ≈ 0.980
        let a = square(100.0, 100.0, 100.0);
        let b = square(101.0, 100.0, 100.0);
        assert!((iou(&a, &b) - 9900.0 / 10100.0).abs() < 1e-12);
        let frames: Vec<_> = (0..30)
            .map(|t| vec![record(t, square(100.0 + t as f64, 100.0, 100.0))])
            .collect();
        let seqs = group_detections(&frames, 0.75);
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].len(), 30);
    }

    #[test]
    fn gap_closes_track() {
        let frames = vec![
            vec![record(0, square(50.0, 50.0, 20.0))],
            vec![],
            vec![record(2, square(50.0, 50.0, 20.0))],
        ];
        assert_eq!(group_detections(&frames, 0.75).len(), 2);
    }

    #[test]
    fn constant_series_unchanged() {
        let s = series(&[3.7; 9]);
        assert_eq!(motion_adaptive_smooth(&s, &SmoothingParams::default()), s);
    }

    #[test]
    fn single_sample_unchanged() {
        let s = series(&[1.25]);
        assert_eq!(motion_adaptive_smooth(&s, &SmoothingParams::default()), s);
    }

    #[test]
    fn zigzag_variance_drops() {
        let raw: Vec<f64> = (0..40).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let params = SmoothingParams {
            motion_scale: 1e6,
            ..SmoothingParams::default()
        };
        let out = xs(&motion_adaptive_smooth(&series(&raw), &params));
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(var(&out) < var(&raw));
        assert!(var(&out) < 0.1 * var(&raw));
    }

    #[test]
    fn fast_motion_is_averaged_less() {
        let params = SmoothingParams::<f64>::default();
        let w = motion_weights(&series(&[0.0, 0.1, 0.2, 10.0, 20.0]), &params);
        assert!(w[1] > w[4]);
        assert!(w[4] >= params.min_weight);
    }

    #[test]
    fn linear_ramp_interior_exact() {
        let raw: Vec<f64> = (0..12).map(|t| 3.0 * t as f64 - 4.0).collect();
        let out = xs(&motion_adaptive_smooth(&series(&raw), &SmoothingParams::default()));
        for t in 2..10 {
            assert_eq!(out[t], raw[t]);
        }
    }

    #[test]
    fn even_window_rejected() {
        let p = SmoothingParams::<f64> {
            window: 4,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn mouth_jitter_leaves_other_parts_bit_identical() {
        let base: Vec<Point2<f64>> = (0..98)
            .map(|i| Point2::new(10.0 + i as f64 * 0.37, 20.0 + (i % 7) as f64))
            .collect();
        let frames: Vec<FrameRecord<f64>> = (0..10)
            .map(|t| {
                let mut pts = base.clone();
                for p in &mut pts[76..96] {
                    p.y += if t % 2 == 0 { 0.8 } else { -0.8 };
                }
                let mut r = record(t, square(50.0, 50.0, 40.0));
                r.landmarks = LandmarkSet::new(pts).unwrap();
                r
            })
            .collect();
        let seq = FrameSequence::new(frames).unwrap();
        let out = smooth_sequence(&seq, &SmoothingParams::default()).unwrap();
        for (a, b) in seq.iter().zip(out.iter()) {
            assert_eq!(b.landmarks.len(), 98);
            assert_eq!(&a.landmarks.points()[..76], &b.landmarks.points()[..76]);
            assert_eq!(&a.landmarks.points()[96..], &b.landmarks.points()[96..]);
            assert_eq!(a.bbox, b.bbox);
        }
        let moved = seq
            .iter()
            .zip(out.iter())
            .any(|(a, b)| a.landmarks.get(80) != b.landmarks.get(80));
        assert!(moved);
    }
}
