use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};
use crate::metrics::InstanceMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheConfig {
    /// Histogram ceiling as a multiple of the uniform bin height.
    pub clip_limit: f64,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub bins: usize,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tiles_x: 8,
            tiles_y: 8,
            bins: 256,
        }
    }
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Clipped-histogram equalization LUT for one tile, or `None` when the tile
/// has no masked pixels or a single occupied bin (the mapping is then the
/// identity on the original values).
fn tile_lut(hist: &[f64], clip_limit: f64) -> Option<Vec<f64>> {
    let bins = hist.len();
    let n: f64 = hist.iter().sum();
    if n == 0.0 || hist.iter().filter(|&&c| c > 0.0).count() < 2 {
        return None;
    }
    let ceiling = (clip_limit * n / bins as f64).max(1.0);
    let mut clipped: Vec<f64> = hist.iter().map(|&c| c.min(ceiling)).collect();
    let excess: f64 = hist.iter().map(|&c| (c - ceiling).max(0.0)).sum();
    let share = excess / bins as f64;
    clipped.iter_mut().for_each(|c| *c += share);
    let mut cdf = 0.0;
    Some(
        clipped
            .iter()
            .map(|c| {
                cdf += c;
                (cdf / n).clamp(0.0, 1.0)
            })
            .collect(),
    )
}

/// Bilinear weights between neighbouring tile centres along one axis.
fn blend_axis(pos: usize, extent: usize, tiles: usize) -> (usize, usize, f64) {
    let g = (pos as f64 + 0.5) * tiles as f64 / extent as f64 - 0.5;
    if g <= 0.0 {
        return (0, 0, 0.0);
    }
    let i0 = (g.floor() as usize).min(tiles - 1);
    let i1 = (i0 + 1).min(tiles - 1);
    (i0, i1, (g - i0 as f64).clamp(0.0, 1.0))
}

/// Contrast-limited adaptive histogram equalization over masked pixels.
/// Unmasked pixels are returned unchanged.
pub fn clahe(img: &GrayImage, mask: &InstanceMask, cfg: &ClaheConfig) -> Result<GrayImage> {
    if (mask.width, mask.height) != (img.width, img.height) {
        return Err(Error::shape("mask and image sizes differ"));
    }
    if cfg.bins < 2 || cfg.tiles_x == 0 || cfg.tiles_y == 0 || !(cfg.clip_limit > 0.0) {
        return Err(Error::invalid(format!("bad CLAHE settings {cfg:?}")));
    }
    let (w, h) = (img.width, img.height);
    let (tx, ty) = (cfg.tiles_x.min(w), cfg.tiles_y.min(h));
    let mut hists = vec![vec![0.0; cfg.bins]; tx * ty];
    for y in 0..h {
        let ti = y * ty / h;
        for x in 0..w {
            if mask.get(x, y) {
                hists[ti * tx + x * tx / w][bin_of(img.get(x, y), cfg.bins)] += 1.0;
            }
        }
    }
    let luts: Vec<Option<Vec<f64>>> = hists.iter().map(|hist| tile_lut(hist, cfg.clip_limit)).collect();
    let map = |t: usize, v: f64| match &luts[t] {
        Some(lut) => lut[bin_of(v, cfg.bins)],
        None => v,
    };
    let mut out = img.clone();
    for y in 0..h {
        let (r0, r1, fy) = blend_axis(y, h, ty);
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (c0, c1, fx) = blend_axis(x, w, tx);
            let v = img.get(x, y);
            let top = map(r0 * tx + c0, v) * (1.0 - fx) + map(r0 * tx + c1, v) * fx;
            let bottom = map(r1 * tx + c0, v) * (1.0 - fx) + map(r1 * tx + c1, v) * fx;
            out.set(x, y, (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}
