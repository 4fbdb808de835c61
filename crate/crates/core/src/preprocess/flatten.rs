use serde::{Deserialize, Serialize};

use super::{DiskGeometry, GrayImage};
use crate::error::{Error, Result};
use crate::metrics::InstanceMask;

const MIN_BACKGROUND: f64 = 1e-6;

/// Mean intensity in equal-width annuli of normalized radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    /// `n_bins + 1` strictly increasing edges spanning [0, 1].
    pub bin_edges: Vec<f64>,
    /// Per-bin mean; empty bins are filled from their neighbours.
    pub mean_intensity: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl RadialProfile {
    /// Smoothed background at normalized radius `d`, linear between bin
    /// centres and constant beyond the outer ones.
    pub fn background(&self, d: f64) -> f64 {
        let n = self.smoothed.len();
        let pos = d * n as f64 - 0.5;
        if pos <= 0.0 {
            return self.smoothed[0];
        }
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return self.smoothed[n - 1];
        }
        let t = pos - i as f64;
        self.smoothed[i] * (1.0 - t) + self.smoothed[i + 1] * t
    }
}

fn fill_empty(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i <= first {
            values[first].expect("known")
        } else if i >= last {
            values[last].expect("known")
        } else if let Some(v) = values[i] {
            v
        } else {
            let lo = known.iter().rev().find(|&&k| k < i).copied().expect("bracketed");
            let hi = known.iter().find(|&&k| k > i).copied().expect("bracketed");
            let t = (i - lo) as f64 / (hi - lo) as f64;
            values[lo].expect("known") * (1.0 - t) + values[hi].expect("known") * t
        };
    }
    Some(out)
}

/// Centred moving average, truncated at the ends.
fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn radial_profile(
    img: &GrayImage,
    geom: &DiskGeometry,
    mask: &InstanceMask,
    n_bins: usize,
    window: usize,
) -> Result<RadialProfile> {
    if n_bins < 8 {
        return Err(Error::invalid(format!("need at least 8 radial bins, got {n_bins}")));
    }
    if (mask.width, mask.height) != (img.width, img.height) {
        return Err(Error::shape("mask and image sizes differ"));
    }
    if !(geom.r > 0.0) {
        return Err(Error::invalid(format!("disk radius {} must be positive", geom.r)));
    }
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for y in 0..img.height {
        for x in 0..img.width {
            if !mask.get(x, y) {
                continue;
            }
            let d = geom.distance(x, y) / geom.r;
            let b = ((d * n_bins as f64) as usize).min(n_bins - 1);
            sums[b] += img.get(x, y);
            counts[b] += 1;
        }
    }
    let means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let mean_intensity =
        fill_empty(&means).ok_or_else(|| Error::invalid("disk mask selects no pixels"))?;
    let smoothed = moving_average(&mean_intensity, window.max(1));
    Ok(RadialProfile {
        bin_edges: (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect(),
        mean_intensity,
        smoothed,
    })
}

/// Divides every masked pixel by the smoothed radial background, rescales so
/// the masked mean is unchanged, and clamps to [0, 1]. Unmasked pixels pass
/// through.
pub fn radial_flatten(
    img: &GrayImage,
    geom: &DiskGeometry,
    mask: &InstanceMask,
    n_bins: usize,
    window: usize,
) -> Result<(GrayImage, RadialProfile)> {
    let profile = radial_profile(img, geom, mask, n_bins, window)?;
    let mut ratio = img.pixels.clone();
    let (mut sum_in, mut sum_ratio) = (0.0, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            if !mask.get(x, y) {
                continue;
            }
            let i = y * img.width + x;
            let bg = profile.background(geom.distance(x, y) / geom.r).max(MIN_BACKGROUND);
            ratio[i] = img.pixels[i] / bg;
            sum_in += img.pixels[i];
            sum_ratio += ratio[i];
        }
    }
    let scale = if sum_ratio > 0.0 { sum_in / sum_ratio } else { 0.0 };
    let mut out = img.clone();
    for (i, (&on, o)) in mask.bits.iter().zip(out.pixels.iter_mut()).enumerate() {
        if on {
            *o = (ratio[i] * scale).clamp(0.0, 1.0);
        }
    }
    Ok((out, profile))
}
