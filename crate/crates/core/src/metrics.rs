//! Instance extraction, pairwise IoU and grid-based multiscale IoU.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary mask, row-major. As an instance it holds at least one set pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

/// All instances of one image.
pub type MaskSet = Vec<InstanceMask>;

impl InstanceMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, bits }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn check_same(&self, other: &InstanceMask) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape(format!(
                "masks {}x{} and {}x{} differ",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &InstanceMask) -> Result<usize> {
        self.check_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count())
    }

    /// Pixelwise OR.
    pub fn union(masks: &[InstanceMask], width: usize, height: usize) -> Result<InstanceMask> {
        let mut out = InstanceMask::empty(width, height);
        for m in masks {
            out.check_same(m)?;
            out.bits.iter_mut().zip(&m.bits).for_each(|(o, b)| *o |= *b);
        }
        Ok(out)
    }

    /// Thresholds probabilities at `threshold` (inclusive).
    pub fn from_probabilities(width: usize, height: usize, probs: &[f64], threshold: f64) -> Result<Self> {
        Self::new(width, height, probs.iter().map(|&p| p >= threshold).collect())
    }
}

/// The scales at which multiscale IoU is evaluated, sorted descending and
/// always containing 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleSet {
    deltas: Vec<f64>,
}

impl ScaleSet {
    pub fn new(mut deltas: Vec<f64>) -> Result<Self> {
        if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0 && *d <= 1.0)) {
            return Err(Error::invalid(format!("scales must lie in (0, 1], got {deltas:?}")));
        }
        deltas.sort_by(|a, b| b.total_cmp(a));
        deltas.dedup();
        if deltas.first() != Some(&1.0) {
            return Err(Error::invalid("scale set must include 1"));
        }
        Ok(Self { deltas })
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
}

impl Default for ScaleSet {
    /// `{1, 1/2, 1/4, 1/8, 1/16}`.
    fn default() -> Self {
        Self {
            deltas: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

impl TryFrom<Vec<f64>> for ScaleSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScaleSet> for Vec<f64> {
    fn from(s: ScaleSet) -> Self {
        s.deltas
    }
}

impl FromStr for ScaleSet {
    type Err = Error;

    /// Comma-separated decimals or fractions, e.g. `1,1/2,0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |tok: &str| -> Result<f64> {
            let tok = tok.trim();
            let bad = || Error::invalid(format!("bad scale {tok:?}"));
            match tok.split_once('/') {
                Some((n, d)) => {
                    let n: f64 = n.trim().parse().map_err(|_| bad())?;
                    let d: f64 = d.trim().parse().map_err(|_| bad())?;
                    Ok(n / d)
                }
                None => tok.parse().map_err(|_| bad()),
            }
        };
        Self::new(s.split(',').map(parse).collect::<Result<_>>()?)
    }
}

impl fmt::Display for ScaleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.deltas.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// 8-connected components of `mask` with at least `min_area` pixels, ordered
/// by their first pixel in row-major order.
pub fn connected_components(mask: &InstanceMask, min_area: usize) -> MaskSet {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![usize::MAX; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = Vec::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits[j] && label[j] == usize::MAX {
                        label[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        let mut inst = InstanceMask::empty(w, h);
        for i in &members {
            inst.bits[*i] = true;
        }
        out.push((members.len(), inst));
    }
    out.into_iter()
        .filter(|(n, _)| *n >= min_area)
        .map(|(_, m)| m)
        .collect()
}

/// `|gt ∩ pt| / |gt ∪ pt|` when the intersection is non-empty, else 0.
pub fn iou_pairwise(gt: &InstanceMask, pt: &InstanceMask) -> Result<f64> {
    gt.check_same(pt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in gt.bits.iter().zip(&pt.bits) {
        inter += usize::from(*a && *b);
        union += usize::from(*a || *b);
    }
    Ok(if inter > 0 { inter as f64 / union as f64 } else { 0.0 })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("scale {delta} outside (0, 1]")));
    }
    Ok(())
}

fn grid_extent(n: usize, delta: f64) -> usize {
    ((n as f64 * delta).ceil() as usize).max(1)
}

/// Coarse grid of `⌈H·δ⌉×⌈W·δ⌉` cells; pixel `(x, y)` falls in cell
/// `(⌊x·δ⌋, ⌊y·δ⌋)` and a cell is set iff any of its pixels is.
pub fn downsample(o: &InstanceMask, delta: f64) -> Result<InstanceMask> {
    check_delta(delta)?;
    if delta == 1.0 {
        return Ok(o.clone());
    }
    let (gw, gh) = (grid_extent(o.width, delta), grid_extent(o.height, delta));
    let mut grid = InstanceMask::empty(gw, gh);
    for y in 0..o.height {
        let cy = ((y as f64 * delta).floor() as usize).min(gh - 1);
        for x in 0..o.width {
            if o.get(x, y) {
                let cx = ((x as f64 * delta).floor() as usize).min(gw - 1);
                grid.set(cx, cy, true);
            }
        }
    }
    Ok(grid)
}

/// Fraction of ground-truth cells also set in the prediction at scale `δ`;
/// 0 when the ground truth has no cells. `o` is always the ground truth.
pub fn scale_ratio(o: &InstanceMask, o_pred: &InstanceMask, delta: f64) -> Result<f64> {
    o.check_same(o_pred)?;
    let (a, b) = (downsample(o, delta)?, downsample(o_pred, delta)?);
    let n = a.count();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection_count(&b)? as f64 / n as f64)
}

/// Mean of [`scale_ratio`] over the scale set.
pub fn iou_multiscale(o: &InstanceMask, o_pred: &InstanceMask, scales: &ScaleSet) -> Result<f64> {
    let mut total = 0.0;
    for &d in scales.deltas() {
        total += scale_ratio(o, o_pred, d)?;
    }
    Ok(total / scales.deltas().len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub gt_index: usize,
    pub pred_index: usize,
    pub pairwise: f64,
    pub multiscale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub pairwise: f64,
    pub multiscale: f64,
    pub pair_count: usize,
    pub pairs: Vec<PairScore>,
}

/// Scores every ground-truth/prediction pair with non-zero pixel overlap and
/// averages them. Images without such pairs get `pair_count == 0` and zero
/// scores.
pub fn evaluate_image(
    image_id: impl Into<String>,
    gt: &[InstanceMask],
    pred: &[InstanceMask],
    scales: &ScaleSet,
) -> Result<ImageRecord> {
    let mut pairs = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            if g.intersection_count(p)? == 0 {
                continue;
            }
            pairs.push(PairScore {
                gt_index: i,
                pred_index: j,
                pairwise: iou_pairwise(g, p)?,
                multiscale: iou_multiscale(g, p, scales)?,
            });
        }
    }
    let n = pairs.len();
    let mean = |f: fn(&PairScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            pairs.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(ImageRecord {
        image_id: image_id.into(),
        pairwise: mean(|p| p.pairwise),
        multiscale: mean(|p| p.multiscale),
        pair_count: n,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scales: ScaleSet,
    pub config_hash: Option<String>,
    pub per_image: Vec<ImageRecord>,
    pub images_evaluated: usize,
    pub images_excluded: usize,
    pub miou_pairwise: f64,
    pub miou_multiscale: f64,
}

/// Dataset means over images with at least one evaluated pair.
pub fn evaluate_dataset(records: Vec<ImageRecord>, scales: &ScaleSet) -> Result<EvalReport> {
    let used: Vec<&ImageRecord> = records.iter().filter(|r| r.pair_count > 0).collect();
    if used.is_empty() {
        return Err(Error::NoEvaluablePairs);
    }
    let n = used.len() as f64;
    let miou_pairwise = used.iter().map(|r| r.pairwise).sum::<f64>() / n;
    let miou_multiscale = used.iter().map(|r| r.multiscale).sum::<f64>() / n;
    let images_evaluated = used.len();
    Ok(EvalReport {
        scales: scales.clone(),
        config_hash: None,
        images_excluded: records.len() - images_evaluated,
        images_evaluated,
        per_image: records,
        miou_pairwise,
        miou_multiscale,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per scored pair.
    pub fn pairs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["image_id", "gt_index", "pred_index", "iou_pairwise", "iou_multiscale"])
            .map_err(io)?;
        for r in &self.per_image {
            for p in &r.pairs {
                w.write_record([
                    r.image_id.clone(),
                    p.gt_index.to_string(),
                    p.pred_index.to_string(),
                    format!("{}", p.pairwise),
                    format!("{}", p.multiscale),
                ])
                .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
