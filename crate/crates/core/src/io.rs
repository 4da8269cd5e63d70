//! PNG codecs for images and segmentation masks.
//!
//! 8-bit samples `v` load as `v / 255`; saving rounds back to the nearest
//! 8-bit level, so `save(load(x))` reproduces `x` exactly.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::imageops::{flip_horizontal, flip_mask_horizontal};
use crate::scalar::Real;
use crate::types::{FrameRecord, ImageBuffer, ImageRef, MaskRef, SegMask};

fn read_png(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(image::ImageReader::open(path)?.with_guessed_format()?.decode()?)
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<ImageBuffer<T>> {
    let path = path.as_ref();
    let img = read_png(path)?;
    let scale = T::lit(255.0);
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => Ok(ImageBuffer::from_raw_clamped(
            w,
            h,
            1,
            g.into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect(),
        )),
        DynamicImage::ImageRgb8(rgb) => Ok(ImageBuffer::from_raw_clamped(
            w,
            h,
            3,
            rgb.into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect(),
        )),
        other => Err(unsupported(
            path,
            format!("{:?}; expected 8-bit gray or RGB", other.color()),
        )),
    }
}

/// Width and height of an image file, read from its header.
pub fn image_size(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let (w, h) = image::image_dimensions(path)?;
    Ok((w as usize, h as usize))
}

/// Quantizes a `[0, 1]` sample to 8 bits.
#[inline]
pub fn to_u8<T: Real>(v: T) -> u8 {
    (v.clamp_to(T::zero(), T::one()).as_f64() * 255.0).round() as u8
}

fn to_dynamic<T: Real>(img: &ImageBuffer<T>) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    if img.channels() == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("extent matches"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("extent matches"))
    }
}

/// Encodes `img` as an 8-bit PNG in memory.
pub fn encode_png<T: Real>(img: &ImageBuffer<T>) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_image<T: Real>(img: &ImageBuffer<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            return Err(Error::MissingFile(parent.to_path_buf()));
        }
    }
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

/// Masks are 8-bit gray PNGs holding raw labels 0, 1, 2.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SegMask> {
    let path = path.as_ref();
    match read_png(path)? {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            SegMask::new(w, h, g.into_raw())
        }
        other => Err(unsupported(path, format!("{:?}; masks are 8-bit gray", other.color()))),
    }
}

pub fn save_mask(mask: &SegMask, path: impl AsRef<Path>) -> Result<()> {
    let g =
        GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.labels().to_vec()).expect("extent matches");
    g.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn read_json<V: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<V> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn write_json<V: serde::Serialize>(value: &V, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

impl<T: Real> FrameRecord<T> {
    /// Full-frame pixels, mirrored when the record says so.
    pub fn load_image(&self) -> Result<ImageBuffer<T>> {
        let img = match &self.image {
            ImageRef::Path(p) => load_image(p)?,
            ImageRef::Memory(m) => (**m).clone(),
        };
        if (img.width(), img.height()) != self.frame_size {
            return Err(Error::shape(
                format!("{:?}", self.frame_size),
                format!("({}, {}) for frame {}", img.width(), img.height(), self.frame),
            ));
        }
        Ok(if self.mirrored { flip_horizontal(&img) } else { img })
    }

    pub fn load_mask(&self) -> Result<Option<SegMask>> {
        let mask = match &self.mask {
            None => return Ok(None),
            Some(MaskRef::Path(p)) => load_mask(p)?,
            Some(MaskRef::Memory(m)) => (**m).clone(),
        };
        if (mask.width(), mask.height()) != self.frame_size {
            return Err(Error::shape(
                format!("{:?}", self.frame_size),
                format!("({}, {}) mask for frame {}", mask.width(), mask.height(), self.frame),
            ));
        }
        Ok(Some(if self.mirrored {
            flip_mask_horizontal(&mask)
        } else {
            mask
        }))
    }
}
