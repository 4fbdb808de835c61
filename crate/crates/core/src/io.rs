//! Grayscale image and binary mask files (PNG, binary PGM).

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::metrics::InstanceMask;
use crate::preprocess::GrayImage;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads an 8- or 16-bit single-channel image, scaling sample values to
/// [0, 1] by the format's full range.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
        other => {
            return Err(Error::invalid(format!(
                "{}: expected a single-channel image, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, pixels)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `img` as 8-bit PNG; values are clamped to [0, 1] first.
pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        img.width as u32,
        img.height as u32,
        img.pixels.iter().map(|&v| quantize(v)).collect(),
    )
    .ok_or_else(|| Error::shape("pixel buffer does not match image size"))?;
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| image_err(path, e))
}

/// Writes a mask as an 8-bit PNG with set pixels at 255.
pub fn write_mask_png(path: &Path, mask: &InstanceMask) -> Result<()> {
    let img = GrayImage {
        width: mask.width,
        height: mask.height,
        pixels: mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    write_gray_png(path, &img)
}

/// Reads a mask image; pixels at or above half range are set.
pub fn read_mask_png(path: &Path) -> Result<InstanceMask> {
    let img = read_gray(path)?;
    InstanceMask::new(img.width, img.height, img.pixels.iter().map(|&v| v >= 0.5).collect())
}

/// RGB overlay of `mask` boundaries (red) on top of `img`.
pub fn write_overlay_png(path: &Path, img: &GrayImage, mask: &InstanceMask) -> Result<()> {
    if (img.width, img.height) != (mask.width, mask.height) {
        return Err(Error::shape("overlay mask and image sizes differ"));
    }
    let (w, h) = (img.width, img.height);
    let boundary = |x: usize, y: usize| {
        mask.get(x, y)
            && (x == 0 || y == 0 || x + 1 == w || y + 1 == h || {
                !mask.get(x - 1, y) || !mask.get(x + 1, y) || !mask.get(x, y - 1) || !mask.get(x, y + 1)
            })
    };
    let mut raw = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            if boundary(x, y) {
                raw.extend_from_slice(&[255, 0, 0]);
            } else {
                let g = quantize(img.get(x, y));
                raw.extend_from_slice(&[g, g, g]);
            }
        }
    }
    let buf: ImageBuffer<image::Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer sized from image");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| image_err(path, e))
}
