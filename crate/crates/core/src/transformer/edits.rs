//! Landmark edits built on the transformer: intermediate poses for
//! stepwise reenactment and the mouth swap for expression transfer.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::transformer::LandmarkTransform;
use crate::types::{LandmarkSet, PoseAngles};
use crate::wflw::{MOUTH, MOUTH_CORNERS};

/// The `n` poses `(1 - i/n) θ_s + (i/n) θ_t` for `i = 1..=n`.
pub fn intermediate_poses<T: Real>(source: PoseAngles<T>, target: PoseAngles<T>, n: usize) -> Vec<PoseAngles<T>> {
    let nf = T::from_usize_lossy(n);
    (1..=n)
        .map(|i| {
            if i == n {
                target
            } else {
                source.lerp(target, T::from_usize_lossy(i) / nf)
            }
        })
        .collect()
}

/// Landmarks for each of `n` reenactment steps.
///
/// Steps `1..n` come from the transformer at the interpolated poses. The
/// final step is `target` when supplied, else the transformer at `θ_t`.
pub fn intermediate_landmarks<T: Real>(
    transform: &dyn LandmarkTransform<T>,
    source: &LandmarkSet<T>,
    source_pose: PoseAngles<T>,
    target_pose: PoseAngles<T>,
    n: usize,
    target: Option<&LandmarkSet<T>>,
) -> Result<Vec<LandmarkSet<T>>> {
    if n == 0 {
        return Err(Error::invalid("at least one reenactment step is required"));
    }
    let poses = intermediate_poses(source_pose, target_pose, n);
    let mut out = Vec::with_capacity(n);
    for pose in &poses[..n - 1] {
        out.push(transform.transform(source, pose)?);
    }
    out.push(match target {
        Some(t) => t.clone(),
        None => transform.transform(source, &target_pose)?,
    });
    Ok(out)
}

/// `target` with its mouth points replaced by the source mouth, moved onto
/// the target mouth centroid and scaled by the ratio of mouth-corner
/// distances. No rotation is applied.
pub fn swap_mouth_landmarks<T: Real>(target: &LandmarkSet<T>, source: &LandmarkSet<T>) -> Result<LandmarkSet<T>> {
    let width = |p: &LandmarkSet<T>| p.get(MOUTH_CORNERS.0).dist(p.get(MOUTH_CORNERS.1));
    let (ws, wt) = (width(source), width(target));
    let scale = if ws > T::zero() { wt / ws } else { T::one() };
    let cs = source.centroid(MOUTH);
    let ct = target.centroid(MOUTH);
    target.with_points(MOUTH, |i| ct + (source.get(i) - cs) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point2;
    use crate::wflw::{INNER_LIP_MIDPOINTS, OUTER_LIP_MIDPOINTS};

    struct Recorder(std::cell::RefCell<Vec<PoseAngles<f64>>>);

    impl LandmarkTransform<f64> for Recorder {
        fn transform(&self, source: &LandmarkSet<f64>, pose: &PoseAngles<f64>) -> Result<LandmarkSet<f64>> {
            self.0.borrow_mut().push(*pose);
            Ok(source.clone())
        }
    }

    fn face(scale: f64, dx: f64) -> LandmarkSet<f64> {
        LandmarkSet::new(
            (0..98)
                .map(|i| Point2::new(dx + scale * ((i * 7 % 23) as f64), scale * ((i * 5 % 17) as f64)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_step_uses_target_pose() {
        let rec = Recorder(Default::default());
        let (s, t) = (PoseAngles::new(0.0, 0.0, 0.0), PoseAngles::new(40.0, -8.0, 4.0));
        let out = intermediate_landmarks(&rec, &face(1.0, 0.0), s, t, 1, None).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(*rec.0.borrow(), vec![t]);
    }

    #[test]
    fn equal_poses_interpolate_to_themselves() {
        let p = PoseAngles::new(12.0, -3.0, 7.5);
        assert!(intermediate_poses(p, p, 6).iter().all(|&q| q == p));
    }

    #[test]
    fn four_steps_follow_quarters() {
        let rec = Recorder(Default::default());
        let (s, t) = (PoseAngles::new(-20.0, 8.0, 0.0), PoseAngles::new(20.0, -4.0, 8.0));
        let target = face(2.0, 3.0);
        let out = intermediate_landmarks(&rec, &face(1.0, 0.0), s, t, 4, Some(&target)).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[3], target);
        let expect = [
            PoseAngles::new(-10.0, 5.0, 2.0),
            PoseAngles::new(0.0, 2.0, 4.0),
            PoseAngles::new(10.0, -1.0, 6.0),
        ];
        let got = rec.0.borrow();
        assert_eq!(got.len(), 3);
        for (g, e) in got.iter().zip(expect) {
            for (a, b) in g.to_array().iter().zip(e.to_array()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let rec = Recorder(Default::default());
        let p = PoseAngles::default();
        assert!(intermediate_landmarks(&rec, &face(1.0, 0.0), p, p, 0, None).is_err());
    }

    #[test]
    fn self_swap_is_identity() {
        let p = face(1.3, 4.0);
        let out = swap_mouth_landmarks(&p, &p).unwrap();
        for (a, b) in out.points().iter().zip(p.points()) {
            assert!(a.dist(*b) < 1e-12);
        }
    }

    #[test]
    fn non_mouth_points_untouched() {
        let (t, s) = (face(1.0, 0.0), face(2.5, 30.0));
        let out = swap_mouth_landmarks(&t, &s).unwrap();
        assert_eq!(&out.points()[..76], &t.points()[..76]);
        assert_eq!(&out.points()[96..], &t.points()[96..]);
    }

    #[test]
    fn wider_source_aperture_carries_over() {
        let t = face(1.0, 0.0);
        // same corners, lips pushed twice as far from the corner line
        let open = |k: f64| {
            t.with_points(MOUTH, |i| {
                let p = t.get(i);
                let mid = t.centroid(MOUTH);
                if i == MOUTH_CORNERS.0 || i == MOUTH_CORNERS.1 {
                    p
                } else {
                    Point2::new(p.x, mid.y + k * (p.y - mid.y))
                }
            })
            .unwrap()
        };
        let src = open(2.0);
        let aperture = |p: &LandmarkSet<f64>, (a, b): (usize, usize)| p.get(a).dist(p.get(b));
        let out = swap_mouth_landmarks(&t, &src).unwrap();
        for pair in [OUTER_LIP_MIDPOINTS, INNER_LIP_MIDPOINTS] {
            let want = aperture(&src, pair);
            assert!((aperture(&out, pair) - want).abs() < 1e-9);
        }
        // scaled source: corners twice as far apart, output keeps target scale
        let big = src.map(|p| p * 2.0).unwrap();
        let out2 = swap_mouth_landmarks(&t, &big).unwrap();
        assert!((aperture(&out2, OUTER_LIP_MIDPOINTS) - aperture(&src, OUTER_LIP_MIDPOINTS)).abs() < 1e-9);
    }
}
