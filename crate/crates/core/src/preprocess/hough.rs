use serde::{Deserialize, Serialize};

use super::{gaussian_blur, DiskGeometry, GrayImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    /// Edge pixels are those whose Sobel magnitude reaches this quantile.
    pub edge_quantile: f64,
    pub r_min_frac: f64,
    pub r_max_frac: f64,
    /// A circle may overhang the frame by this many pixels.
    pub slack: f64,
    /// Edge pixels needed within `refine_band` of the winning circle, as a
    /// fraction of its circumference.
    pub min_vote_frac: f64,
    /// Half-width of the band of edge pixels used to refine the peak.
    pub refine_band: f64,
    /// Longest short side voted on at full resolution.
    pub max_side: usize,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            edge_quantile: 0.9,
            r_min_frac: 0.3,
            r_max_frac: 0.55,
            slack: 2.0,
            min_vote_frac: 0.1,
            refine_band: 3.0,
            max_side: 256,
        }
    }
}

struct Edge {
    x: f64,
    y: f64,
    gx: f64,
    gy: f64,
    mag: f64,
}

fn sobel_edges(img: &GrayImage, quantile: f64) -> Vec<Edge> {
    let (w, h) = (img.width, img.height);
    let mut all = Vec::with_capacity(w * h);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let p = |dx: isize, dy: isize| img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            all.push(Edge {
                x: x as f64,
                y: y as f64,
                gx,
                gy,
                mag: gx.hypot(gy),
            });
        }
    }
    if all.is_empty() {
        return all;
    }
    let mut mags: Vec<f64> = all.iter().map(|e| e.mag).collect();
    let k = ((mags.len() - 1) as f64 * quantile.clamp(0.0, 1.0)).round() as usize;
    let (_, &mut thr, _) = mags.select_nth_unstable_by(k, f64::total_cmp);
    all.into_iter().filter(|e| e.mag > 0.0 && e.mag >= thr).collect()
}

/// Circle Hough transform over `(cx, cy, r)` with magnitude-weighted votes
/// cast along the gradient direction (both signs), followed by a least-squares circle fit to
/// the full-resolution edge pixels near the peak. Frames larger than
/// `max_side` are voted on a box-averaged copy.
pub fn detect_disk(img: &GrayImage, cfg: &HoughConfig) -> Result<DiskGeometry> {
    let factor = img.width.min(img.height).div_ceil(cfg.max_side.max(16)).max(1);
    let small = box_downsample(img, factor);
    let coarse = vote(&small, cfg)?;
    let f = factor as f64;
    let offset = (f - 1.0) / 2.0;
    let coarse = DiskGeometry {
        cx: coarse.cx * f + offset,
        cy: coarse.cy * f + offset,
        r: coarse.r * f,
    };
    let edges = sobel_edges(&gaussian_blur(img, 1.0), cfg.edge_quantile);
    Ok(refine(&edges, coarse, cfg.refine_band * f).unwrap_or(coarse))
}

fn box_downsample(img: &GrayImage, factor: usize) -> GrayImage {
    if factor == 1 {
        return img.clone();
    }
    let (w, h) = (img.width / factor, img.height / factor);
    GrayImage::from_fn(w, h, |x, y| {
        let mut s = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                s += img.get(x * factor + dx, y * factor + dy);
            }
        }
        s / (factor * factor) as f64
    })
}

/// Running-sum box filter of half-width `k` along one axis of a 3-D array
/// laid out as `[n0][n1][n2]`, applied to axis `axis`.
fn box_filter(acc: &[f64], dims: [usize; 3], axis: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; acc.len()];
    let strides = [dims[1] * dims[2], dims[2], 1];
    let n = dims[axis];
    let stride = strides[axis];
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    for i in 0..dims[others[0]] {
        for j in 0..dims[others[1]] {
            let base = i * strides[others[0]] + j * strides[others[1]];
            let mut prefix = vec![0.0; n + 1];
            for t in 0..n {
                prefix[t + 1] = prefix[t] + acc[base + t * stride];
            }
            for t in 0..n {
                let lo = t.saturating_sub(k);
                let hi = (t + k + 1).min(n);
                out[base + t * stride] = prefix[hi] - prefix[lo];
            }
        }
    }
    out
}

fn vote(img: &GrayImage, cfg: &HoughConfig) -> Result<DiskGeometry> {
    let (w, h) = (img.width, img.height);
    let side = w.min(h) as f64;
    let r_lo = (cfg.r_min_frac * side).ceil().max(1.0) as usize;
    let r_hi = (cfg.r_max_frac * side).floor() as usize;
    if r_hi < r_lo {
        return Err(Error::DiskNotFound(format!("{w}x{h} image too small for radius search")));
    }
    let edges = sobel_edges(&gaussian_blur(img, 1.0), cfg.edge_quantile);
    if edges.is_empty() {
        return Err(Error::DiskNotFound("no edges".into()));
    }
    let nr = r_hi - r_lo + 1;
    let mut acc = vec![0.0f64; nr * h * w];
    for e in &edges {
        let (ux, uy) = (e.gx / e.mag, e.gy / e.mag);
        for ri in 0..nr {
            let r = (r_lo + ri) as f64;
            for sign in [1.0, -1.0] {
                let cx = (e.x + sign * r * ux).round();
                let cy = (e.y + sign * r * uy).round();
                let fits = cx - r >= -cfg.slack
                    && cy - r >= -cfg.slack
                    && cx + r <= (w - 1) as f64 + cfg.slack
                    && cy + r <= (h - 1) as f64 + cfg.slack;
                if fits {
                    acc[(ri * h + cy as usize) * w + cx as usize] += e.mag;
                }
            }
        }
    }
    let dims = [nr, h, w];
    let acc = box_filter(&acc, dims, 2, 2);
    let acc = box_filter(&acc, dims, 1, 2);
    let acc = box_filter(&acc, dims, 0, 1);
    let (best, _) = acc
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty accumulator");
    let geom = DiskGeometry {
        cx: (best % w) as f64,
        cy: ((best / w) % h) as f64,
        r: (r_lo + best / (w * h)) as f64,
    };
    let support = edges
        .iter()
        .filter(|e| ((e.x - geom.cx).hypot(e.y - geom.cy) - geom.r).abs() <= cfg.refine_band)
        .count();
    let needed = (cfg.min_vote_frac * 2.0 * std::f64::consts::PI * geom.r).max(3.0);
    if (support as f64) < needed {
        return Err(Error::DiskNotFound(format!(
            "best circle has {support} supporting edge pixels, need {needed:.0}"
        )));
    }
    Ok(geom)
}

/// Weighted algebraic circle fit `x² + y² + D·x + E·y + F = 0` over edge
/// pixels within `band` of the coarse circle, weighted by squared gradient
/// magnitude.
fn refine(edges: &[Edge], coarse: DiskGeometry, band: f64) -> Option<DiskGeometry> {
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let mut used = 0usize;
    for e in edges {
        let d = (e.x - coarse.cx).hypot(e.y - coarse.cy);
        if (d - coarse.r).abs() > band {
            continue;
        }
        // Centre coordinates on the coarse estimate for conditioning.
        let (x, y) = (e.x - coarse.cx, e.y - coarse.cy);
        let wgt = e.mag * e.mag;
        let row = [x, y, 1.0];
        let z = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += wgt * row[i] * row[j];
            }
            rhs[i] += wgt * row[i] * z;
        }
        used += 1;
    }
    if used < 3 {
        return None;
    }
    let [d, e, f] = solve3(m, rhs)?;
    let (cx, cy) = (-d / 2.0, -e / 2.0);
    let r2 = cx * cx + cy * cy - f;
    if !(r2 > 0.0) {
        return None;
    }
    let refined = DiskGeometry {
        cx: coarse.cx + cx,
        cy: coarse.cy + cy,
        r: r2.sqrt(),
    };
    let moved = cx.hypot(cy) <= band && (refined.r - coarse.r).abs() <= band;
    moved.then_some(refined)
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}
