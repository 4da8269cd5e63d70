use approx::assert_abs_diff_eq;
use facepipe_core::blend::soft_erode;
use facepipe_core::delaunay::Triangulation;
use facepipe_core::geometry::{barycentric, circumcircle, orient2d};
use facepipe_core::heatmap::{decode_landmarks, encode_heatmap, roundtrip};
use facepipe_core::tracking::{motion_adaptive_smooth, SmoothingParams};
use facepipe_core::{Image, Landmarks, Point2};
use proptest::prelude::*;

fn point_in(lo: f64, hi: f64) -> impl Strategy<Value = Point2<f64>> {
    (lo..hi, lo..hi).prop_map(|(x, y)| Point2::new(x, y))
}

fn landmarks_in(lo: f64, hi: f64) -> impl Strategy<Value = Landmarks> {
    prop::collection::vec(point_in(lo, hi), 98).prop_map(|p| Landmarks::new(p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decode_ignores_positive_scaling(p in landmarks_in(0.0, 64.0), s in 1e-3f64..1e3) {
        let hm = encode_heatmap(&p, 64, 64).unwrap();
        let base = decode_landmarks(hm.as_volume()).unwrap().landmarks;
        let scaled = decode_landmarks(&hm.as_volume().scaled(s)).unwrap().landmarks;
        prop_assert_eq!(base, scaled);
    }

    // Away from the border the support is symmetric around the landmark.
    #[test]
    fn interior_points_survive_roundtrip(p in landmarks_in(3.0, 61.0)) {
        let q = roundtrip(&p, 64, 64).unwrap();
        for (a, b) in p.points().iter().zip(q.points()) {
            prop_assert!(a.dist(*b) <= 0.5, "{a:?} -> {b:?}");
        }
    }

    #[test]
    fn delaunay_circles_are_empty(pts in prop::collection::vec(point_in(1.0, 99.0), 1..40)) {
        let tri = Triangulation::in_rectangle(Point2::new(0.0, 0.0), Point2::new(100.0, 100.0), &pts).unwrap();
        for t in 0..tri.triangles().len() {
            let [a, b, c] = tri.triangle_points(t);
            prop_assert!(orient2d(a, b, c) > 0.0);
            let (center, r2) = circumcircle(a, b, c).unwrap();
            for p in tri.points() {
                let d = center.dist(*p);
                prop_assert!(d * d >= r2 * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn barycentric_reconstructs_the_point(
        a in point_in(-50.0, 50.0),
        b in point_in(-50.0, 50.0),
        c in point_in(-50.0, 50.0),
        p in point_in(-50.0, 50.0),
    ) {
        prop_assume!(orient2d(a, b, c).abs() > 1.0);
        let l = barycentric(a, b, c, p).unwrap();
        assert_abs_diff_eq!(l.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(l[0] * a.x + l[1] * b.x + l[2] * c.x, p.x, epsilon = 1e-7);
        assert_abs_diff_eq!(l[0] * a.y + l[1] * b.y + l[2] * c.y, p.y, epsilon = 1e-7);
    }

    #[test]
    fn smoothing_keeps_still_signals(
        group in prop::collection::vec(point_in(-10.0, 10.0), 1..6),
        frames in 1usize..12,
    ) {
        let signal = vec![group.clone(); frames];
        let out = motion_adaptive_smooth(&signal, &SmoothingParams::default());
        prop_assert_eq!(out.len(), frames);
        for g in out {
            for (a, b) in g.iter().zip(&group) {
                assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
                assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn soft_erosion_stays_inside_the_mask(
        bits in prop::collection::vec(any::<bool>(), 144),
        width in 0.5f64..6.0,
    ) {
        let data: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let mask = Image::new(12, 12, 1, data.clone()).unwrap();
        let soft = soft_erode(&mask, width).unwrap();
        let wider = soft_erode(&mask, width * 2.0).unwrap();
        for ((m, s), w) in data.iter().zip(soft.data()).zip(wider.data()) {
            prop_assert!((0.0..=1.0).contains(s));
            prop_assert!(*s <= *m);
            prop_assert!(*w <= *s);
        }
    }
}
