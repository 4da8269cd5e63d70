//! The 98-point WFLW landmark layout.

use std::ops::Range;

use crate::scalar::Real;
use crate::types::{LandmarkSet, Point2};

pub const NUM_LANDMARKS: usize = 98;

pub const CONTOUR: Range<usize> = 0..33;
pub const BROWS: Range<usize> = 33..51;
pub const NOSE: Range<usize> = 51..60;
pub const EYES: Range<usize> = 60..76;
pub const MOUTH: Range<usize> = 76..96;
pub const PUPILS: Range<usize> = 96..98;

/// Outer mouth corners (left, right in image space).
pub const MOUTH_CORNERS: (usize, usize) = (76, 82);

/// Midpoints of the outer upper and lower lip.
pub const OUTER_LIP_MIDPOINTS: (usize, usize) = (79, 85);

/// Midpoints of the inner upper and lower lip.
pub const INNER_LIP_MIDPOINTS: (usize, usize) = (90, 94);

/// Face parts in index order; they partition `0..98`.
pub const PARTS: [Range<usize>; 6] = [CONTOUR, BROWS, NOSE, EYES, MOUTH, PUPILS];

/// Index permutation applied when a face is mirrored horizontally.
///
/// `FLIP[i]` is the index that point `i` lands on after reflection.
pub const FLIP: [usize; NUM_LANDMARKS] = {
    let mut perm = [0usize; NUM_LANDMARKS];
    let mut i = 0;
    while i < NUM_LANDMARKS {
        perm[i] = i;
        i += 1;
    }
    // contour runs ear to ear
    let mut i = 0;
    while i < 33 {
        perm[i] = 32 - i;
        i += 1;
    }
    let pairs: [(usize, usize); 30] = [
        // brows: upper arcs, then lower arcs
        (33, 46),
        (34, 45),
        (35, 44),
        (36, 43),
        (37, 42),
        (38, 50),
        (39, 49),
        (40, 48),
        (41, 47),
        // nostrils
        (55, 59),
        (56, 58),
        // eyes
        (60, 72),
        (61, 71),
        (62, 70),
        (63, 69),
        (64, 68),
        (65, 75),
        (66, 74),
        (67, 73),
        // outer lip
        (76, 82),
        (77, 81),
        (78, 80),
        (83, 87),
        (84, 86),
        // inner lip
        (88, 92),
        (89, 91),
        (93, 95),
        // pupils
        (96, 97),
        // self-paired entries keep the table length fixed
        (57, 57),
        (79, 79),
    ];
    let mut k = 0;
    while k < pairs.len() {
        let (a, b) = pairs[k];
        perm[a] = b;
        perm[b] = a;
        k += 1;
    }
    perm
};

/// Landmarks of the horizontally mirrored face in a frame `width` wide:
/// `x' = width - x`, with left and right indices swapped through [`FLIP`].
pub fn mirror_landmarks<T: Real>(p: &LandmarkSet<T>, width: T) -> LandmarkSet<T> {
    let mut out = p.points().to_vec();
    for (i, q) in p.points().iter().enumerate() {
        out[FLIP[i]] = Point2::new(width - q.x, q.y);
    }
    LandmarkSet::new(out).expect("mirroring keeps points finite")
}

/// Part index that owns landmark `i`.
pub fn part_of(i: usize) -> usize {
    PARTS.iter().position(|r| r.contains(&i)).expect("landmark index < 98")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_partition_all_indices() {
        let mut seen = [0u8; NUM_LANDMARKS];
        for r in PARTS {
            for i in r {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn flip_is_an_involution() {
        for i in 0..NUM_LANDMARKS {
            assert_eq!(FLIP[FLIP[i]], i, "index {i}");
        }
    }

    #[test]
    fn mirror_twice_is_identity() {
        let p = LandmarkSet::new((0..98).map(|i| Point2::new(i as f64 * 1.5, (i % 7) as f64)).collect()).unwrap();
        let m = mirror_landmarks(&p, 200.0);
        assert_eq!(m.get(FLIP[3]).x, 200.0 - 4.5);
        assert_eq!(mirror_landmarks(&m, 200.0), p);
    }

    #[test]
    fn flip_stays_within_part() {
        for i in 0..NUM_LANDMARKS {
            assert_eq!(part_of(i), part_of(FLIP[i]), "index {i}");
        }
    }
}
