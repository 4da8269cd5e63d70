//! Picks the most varied frames of a sequence by landmark spread.

use facepipe_core::Sequence;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy farthest-point selection on flattened landmark vectors.
///
/// The first pick is the frame farthest from the mean landmark vector; each
/// later pick maximizes its distance to the nearest frame already chosen.
/// Ties go to the earlier frame. The result keeps the input order.
pub fn curate_sequence(seq: &Sequence, max_frames: usize) -> Sequence {
    let n = seq.len();
    if n <= max_frames {
        return seq.clone();
    }
    let vecs: Vec<Vec<f64>> = seq.iter().map(|f| f.landmarks.to_flat()).collect();
    let dim = vecs[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|j| vecs.iter().map(|v| v[j]).sum::<f64>() / n as f64)
        .collect();

    let argmax = |score: &dyn Fn(usize) -> f64, taken: &[bool]| {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let s = score(i);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    };

    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut pick = argmax(&|i| sq_dist(&vecs[i], &mean), &taken);
    for _ in 0..max_frames {
        let Some(p) = pick else { break };
        taken[p] = true;
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(&vecs[i], &vecs[p]));
        }
        pick = argmax(&|i| nearest[i], &taken);
    }
    let frames = seq
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| t)
        .map(|(f, _)| f.clone())
        .collect();
    Sequence::new(frames).expect("subsequence keeps order")
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use facepipe_core::{BBox, Frame, Image, ImageRef, Landmarks, Point2, Pose};

    use super::*;

    fn frame(i: usize, dx: f64) -> Frame {
        Frame {
            frame: i,
            image: ImageRef::Memory(Arc::new(Image::zeros(4, 4, 3))),
            mask: None,
            mirrored: false,
            frame_size: (4, 4),
            bbox: BBox::new(2.0, 2.0, 4.0, 4.0).unwrap(),
            landmarks: Landmarks::new((0..98).map(|k| Point2::new(k as f64 + dx, 1.0)).collect()).unwrap(),
            pose: Pose::new(0.0, 0.0, 0.0),
        }
    }

    fn seq(offsets: &[f64]) -> Sequence {
        Sequence::new(offsets.iter().enumerate().map(|(i, &d)| frame(i, d)).collect()).unwrap()
    }

    fn picked(s: &Sequence) -> Vec<usize> {
        s.iter().map(|f| f.frame).collect()
    }

    #[test]
    fn short_sequences_pass_through() {
        assert_eq!(picked(&curate_sequence(&seq(&[0.0, 1.0]), 5)), [0, 1]);
    }

    #[test]
    fn outlier_is_selected() {
        let s = curate_sequence(&seq(&[0.0, 0.1, 0.2, 9.0]), 2);
        assert!(picked(&s).contains(&3));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn identical_frames_are_deterministic() {
        let s = seq(&[1.0; 30]);
        let a = picked(&curate_sequence(&s, 10));
        assert_eq!(a, picked(&curate_sequence(&s, 10)));
        assert_eq!(a.len(), 10);
    }
}
