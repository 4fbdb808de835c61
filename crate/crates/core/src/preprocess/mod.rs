//! Full-disk image preparation: normalization, disk detection and masking,
//! radial flattening, smoothing, local contrast equalization.

mod clahe;
mod flatten;
mod hough;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::InstanceMask;

pub use clahe::{clahe, ClaheConfig};
pub use flatten::{radial_flatten, radial_profile, RadialProfile};
pub use hough::{detect_disk, HoughConfig};

/// Single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::shape(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Solar disk centre and radius in pixel coordinates; pixel `(x, y)` has its
/// centre at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskGeometry {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl DiskGeometry {
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        (x as f64 - self.cx).hypot(y as f64 - self.cy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub mask_shrink: f64,
    pub n_bins: usize,
    pub smooth_window: usize,
    pub blur_sigma: f64,
    pub hough: HoughConfig,
    pub clahe: ClaheConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            mask_shrink: 0.01,
            n_bins: 64,
            smooth_window: 5,
            blur_sigma: 0.7,
            hough: HoughConfig::default(),
            clahe: ClaheConfig::default(),
        }
    }
}

/// Linear min-max rescale to [0, 1]; a constant image maps to zeros.
pub fn normalize(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img.min_max();
    let span = hi - lo;
    let pixels = if span > 0.0 && span.is_finite() {
        img.pixels.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; img.pixels.len()]
    };
    GrayImage { pixels, ..*img }
}

/// Pixels within `r·(1 − shrink)` of the centre.
pub fn make_disk_mask(geom: &DiskGeometry, width: usize, height: usize, shrink: f64) -> Result<InstanceMask> {
    if !(0.0..1.0).contains(&shrink) {
        return Err(Error::invalid(format!("mask shrink {shrink} outside [0, 1)")));
    }
    let limit = geom.r * (1.0 - shrink);
    Ok(InstanceMask::from_fn(width, height, |x, y| geom.distance(x, y) <= limit))
}

/// Normalized 3×3 sampled Gaussian, row-major.
pub fn gaussian_kernel(sigma: f64) -> [f64; 9] {
    let mut k = [0.0; 9];
    for (i, w) in k.iter_mut().enumerate() {
        let (dx, dy) = ((i % 3) as f64 - 1.0, (i / 3) as f64 - 1.0);
        *w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Mirror index without repeating the edge pixel (`-1 → 1`, `n → n − 2`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// 3×3 Gaussian smoothing with mirrored borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let (w, h) = (img.width, img.height);
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (i, kw) in k.iter().enumerate() {
            let sx = reflect(x as isize + (i % 3) as isize - 1, w);
            let sy = reflect(y as isize + (i / 3) as isize - 1, h);
            acc += kw * img.get(sx, sy);
        }
        acc
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub image: GrayImage,
    pub geometry: DiskGeometry,
    pub profile: RadialProfile,
}

/// normalize → detect disk → mask → radial flatten → blur → CLAHE → zero
/// off-disk. Output lies in [0, 1] with off-disk pixels exactly 0.
pub fn run_pipeline(img: &GrayImage, cfg: &PreprocessConfig) -> Result<PipelineOutput> {
    let norm = normalize(img);
    let geometry = detect_disk(&norm, &cfg.hough)?;
    let mask = make_disk_mask(&geometry, img.width, img.height, cfg.mask_shrink)?;
    let (flat, profile) = radial_flatten(&norm, &geometry, &mask, cfg.n_bins, cfg.smooth_window)?;
    let blurred = gaussian_blur(&flat, cfg.blur_sigma);
    let mut image = clahe(&blurred, &mask, &cfg.clahe)?;
    for (v, &on) in image.pixels.iter_mut().zip(&mask.bits) {
        *v = if on { v.clamp(0.0, 1.0) } else { 0.0 };
    }
    Ok(PipelineOutput {
        image,
        geometry,
        profile,
    })
}
