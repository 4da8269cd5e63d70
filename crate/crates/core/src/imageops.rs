//! Resampling and simple per-pixel image operations.
//!
//! Continuous image coordinates put the center of pixel `(i, j)` at
//! `(i + 0.5, j + 0.5)`.

use crate::error::{Error, Result};
use crate::geometry::Affine2;
use crate::scalar::Real;
use crate::types::{BoundingBox, ImageBuffer, LandmarkSet, Point2, SegMask};

/// Bilinear sample of channel `c` at continuous position `(x, y)`,
/// clamping to the nearest edge pixel outside the frame.
#[inline]
pub fn sample_bilinear<T: Real>(img: &ImageBuffer<T>, x: T, y: T, c: usize) -> T {
    let half = T::lit(0.5);
    let (w, h) = (img.width(), img.height());
    let u = (x - half).clamp_to(T::zero(), T::from_usize_lossy(w - 1));
    let v = (y - half).clamp_to(T::zero(), T::from_usize_lossy(h - 1));
    let x0 = u.floor().to_usize().unwrap_or(0).min(w - 1);
    let y0 = v.floor().to_usize().unwrap_or(0).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = u - T::from_usize_lossy(x0);
    let fy = v - T::from_usize_lossy(y0);
    let top = img.get(x0, y0, c) * (T::one() - fx) + img.get(x1, y0, c) * fx;
    let bot = img.get(x0, y1, c) * (T::one() - fx) + img.get(x1, y1, c) * fx;
    top * (T::one() - fy) + bot * fy
}

/// Resamples `img` onto a `width`×`height` grid by mapping every output
/// pixel center through `to_source`.
pub fn warp_affine<T: Real>(
    img: &ImageBuffer<T>,
    width: usize,
    height: usize,
    to_source: &Affine2<T>,
) -> ImageBuffer<T> {
    let half = T::lit(0.5);
    let ch = img.channels();
    let mut data = Vec::with_capacity(width * height * ch);
    for y in 0..height {
        for x in 0..width {
            let q = to_source.apply(Point2::new(
                T::from_usize_lossy(x) + half,
                T::from_usize_lossy(y) + half,
            ));
            for c in 0..ch {
                data.push(sample_bilinear(img, q.x, q.y, c));
            }
        }
    }
    ImageBuffer::from_raw_clamped(width, height, ch, data)
}

/// Affine map from crop coordinates (`size`×`size`) to frame coordinates of `bbox`.
pub fn crop_to_frame<T: Real>(bbox: &BoundingBox<T>, size: usize) -> Affine2<T> {
    let s = T::from_usize_lossy(size);
    Affine2 {
        m: [[bbox.w / s, T::zero()], [T::zero(), bbox.h / s]],
        t: [bbox.x0(), bbox.y0()],
    }
}

/// Frame pixels → crop pixels for a `size`×`size` crop of `bbox`.
pub fn landmarks_to_crop<T: Real>(p: &LandmarkSet<T>, bbox: &BoundingBox<T>, size: usize) -> Result<LandmarkSet<T>> {
    let s = T::from_usize_lossy(size);
    let (sx, sy) = (s / bbox.w, s / bbox.h);
    let (x0, y0) = (bbox.x0(), bbox.y0());
    p.map(|q| Point2::new((q.x - x0) * sx, (q.y - y0) * sy))
}

pub fn landmarks_from_crop<T: Real>(p: &LandmarkSet<T>, bbox: &BoundingBox<T>, size: usize) -> Result<LandmarkSet<T>> {
    let map = crop_to_frame(bbox, size);
    p.map(|q| map.apply(q))
}

/// Crops `bbox` out of `img`, resampled to `size`×`size`.
pub fn crop<T: Real>(img: &ImageBuffer<T>, bbox: &BoundingBox<T>, size: usize) -> ImageBuffer<T> {
    warp_affine(img, size, size, &crop_to_frame(bbox, size))
}

/// Nearest-neighbour crop of a label mask.
pub fn crop_mask<T: Real>(mask: &SegMask, bbox: &BoundingBox<T>, size: usize) -> SegMask {
    let map = crop_to_frame(bbox, size);
    let half = T::lit(0.5);
    let mut labels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let q = map.apply(Point2::new(
                T::from_usize_lossy(x) + half,
                T::from_usize_lossy(y) + half,
            ));
            let xi = q.x.floor().to_isize().unwrap_or(-1);
            let yi = q.y.floor().to_isize().unwrap_or(-1);
            let inside = xi >= 0 && yi >= 0 && (xi as usize) < mask.width() && (yi as usize) < mask.height();
            labels.push(if inside {
                mask.get(xi as usize, yi as usize)
            } else {
                SegMask::BACKGROUND
            });
        }
    }
    SegMask::new(size, size, labels).expect("labels copied from a valid mask")
}

pub fn resize<T: Real>(img: &ImageBuffer<T>, width: usize, height: usize) -> ImageBuffer<T> {
    let sx = T::from_usize_lossy(img.width()) / T::from_usize_lossy(width);
    let sy = T::from_usize_lossy(img.height()) / T::from_usize_lossy(height);
    let map = Affine2 {
        m: [[sx, T::zero()], [T::zero(), sy]],
        t: [T::zero(), T::zero()],
    };
    warp_affine(img, width, height, &map)
}

pub fn flip_horizontal<T: Real>(img: &ImageBuffer<T>) -> ImageBuffer<T> {
    let (w, h, ch) = img.extent();
    ImageBuffer::from_fn(w, h, ch, |x, y, c| img.get(w - 1 - x, y, c))
}

pub fn flip_mask_horizontal(mask: &SegMask) -> SegMask {
    let (w, h) = (mask.width(), mask.height());
    let labels = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| mask.get(w - 1 - x, y))
        .collect();
    SegMask::new(w, h, labels).expect("same labels")
}

/// Rotates `img` by `degrees` about its center (see [`Affine2::rotation_about`]).
pub fn rotate_about_center<T: Real>(img: &ImageBuffer<T>, degrees: T) -> ImageBuffer<T> {
    let center = Point2::new(T::from_usize_lossy(img.width()), T::from_usize_lossy(img.height())) * T::lit(0.5);
    let inv = Affine2::rotation_about(center, -degrees);
    warp_affine(img, img.width(), img.height(), &inv)
}

/// `Σ w_k · img_k`, accumulated in the given order.
pub fn weighted_sum<T: Real>(images: &[ImageBuffer<T>], weights: &[T]) -> Result<ImageBuffer<T>> {
    let first = images.first().ok_or_else(|| Error::invalid("no images to combine"))?;
    if images.len() != weights.len() {
        return Err(Error::shape(images.len(), weights.len()));
    }
    if let Some(bad) = images.iter().find(|i| !i.same_extent(first)) {
        return Err(Error::shape(
            format!("{:?}", first.extent()),
            format!("{:?}", bad.extent()),
        ));
    }
    let mut acc = vec![T::zero(); first.data().len()];
    for (img, &w) in images.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(img.data()) {
            *a += w * v;
        }
    }
    let (w, h, c) = first.extent();
    Ok(ImageBuffer::from_raw_clamped(w, h, c, acc))
}

/// Luma as a single channel (Rec. 601 weights).
pub fn to_gray<T: Real>(img: &ImageBuffer<T>) -> ImageBuffer<T> {
    if img.channels() == 1 {
        return img.clone();
    }
    let (w, h, _) = img.extent();
    let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    ImageBuffer::from_fn(w, h, 1, |x, y, _| {
        r * img.get(x, y, 0) + g * img.get(x, y, 1) + b * img.get(x, y, 2)
    })
}

/// Variance of the 4-neighbour Laplacian response over interior pixels.
/// Low values indicate blur.
pub fn laplacian_variance<T: Real>(img: &ImageBuffer<T>) -> T {
    let g = to_gray(img);
    let (w, h) = (g.width(), g.height());
    if w < 3 || h < 3 {
        return T::zero();
    }
    let mut vals = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let l = g.get(x - 1, y, 0) + g.get(x + 1, y, 0) + g.get(x, y - 1, 0) + g.get(x, y + 1, 0)
                - T::lit(4.0) * g.get(x, y, 0);
            vals.push(l);
        }
    }
    let n = T::from_usize_lossy(vals.len());
    let mean = vals.iter().copied().sum::<T>() / n;
    vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
}
