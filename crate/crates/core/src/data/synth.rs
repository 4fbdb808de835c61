use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::metrics::{InstanceMask, MaskSet};
use crate::preprocess::{DiskGeometry, GrayImage};

/// Ranges are inclusive `[min, max]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Disk radius as a fraction of the shorter image side.
    pub radius_frac: [f64; 2],
    pub filaments: [usize; 2],
    /// Spine chord length as a fraction of the disk radius.
    pub spine_length: [f64; 2],
    /// Lateral offset of the Bézier control point as a fraction of the chord.
    pub curvature: [f64; 2],
    /// Spine stroke width in pixels.
    pub spine_width: [f64; 2],
    pub barbs: [usize; 2],
    pub barb_length: [f64; 2],
    /// Barb angle from the local spine tangent, in degrees.
    pub barb_angle_deg: [f64; 2],
    pub barb_width: f64,
    /// Barbs alternate sides of the spine; otherwise all leave on the left.
    pub alternate_barbs: bool,
    /// Linear limb-darkening coefficient `u` in `I0·(1 − u·(1 − μ))`.
    pub limb_darkening: f64,
    pub disk_intensity: f64,
    pub sky_intensity: f64,
    /// Fractional darkening of filament pixels relative to the local disk.
    pub contrast: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            count: 8,
            width: 64,
            height: 64,
            radius_frac: [0.38, 0.46],
            filaments: [1, 3],
            spine_length: [0.35, 0.8],
            curvature: [0.0, 0.3],
            spine_width: [2.0, 4.0],
            barbs: [0, 4],
            barb_length: [3.0, 6.0],
            barb_angle_deg: [30.0, 60.0],
            barb_width: 1.5,
            alternate_barbs: true,
            limb_darkening: 0.6,
            disk_intensity: 0.9,
            sky_intensity: 0.02,
            contrast: 0.4,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: &[T; 2]) -> Result<()> {
    if r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} range {r:?} is empty")))
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("radius_frac", &self.radius_frac)?;
        check_range("filaments", &self.filaments)?;
        check_range("spine_length", &self.spine_length)?;
        check_range("curvature", &self.curvature)?;
        check_range("spine_width", &self.spine_width)?;
        check_range("barbs", &self.barbs)?;
        check_range("barb_length", &self.barb_length)?;
        check_range("barb_angle_deg", &self.barb_angle_deg)?;
        let ok = self.width >= 16
            && self.height >= 16
            && self.radius_frac[0] > 0.0
            && self.radius_frac[1] < 0.5
            && self.filaments[0] >= 1
            && self.spine_length[0] > 0.0
            && self.spine_length[1] <= 1.0
            && self.spine_width[0] >= 1.0
            && self.barb_width > 0.0
            && self.barb_length[0] >= 0.0
            && (0.0..1.0).contains(&self.limb_darkening)
            && self.disk_intensity > self.sky_intensity
            && self.disk_intensity <= 1.0
            && self.sky_intensity >= 0.0
            && self.contrast > 0.0
            && self.contrast < 1.0
            && self.noise_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent synthetic config {self:?}")))
        }
    }
}

/// Geometry of one rendered filament, in pixel-centre coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilamentShape {
    pub spine: Vec<(f64, f64)>,
    pub spine_width: f64,
    /// Barb segments as `(base, tip)`.
    pub barbs: Vec<((f64, f64), (f64, f64))>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub image: GrayImage,
    /// The rendered image before noise.
    pub clean: GrayImage,
    pub instances: MaskSet,
    /// Parallel to `instances`.
    pub shapes: Vec<FilamentShape>,
    pub geometry: DiskGeometry,
}

impl SyntheticSample {
    pub fn into_sample(self) -> Result<Sample> {
        Sample::new(self.id, self.image, self.instances)
    }
}

/// Limb-darkened disk brightness at pixel `(x, y)`, sky outside.
pub fn disk_background(cfg: &SyntheticConfig, geom: &DiskGeometry, x: usize, y: usize) -> f64 {
    let d = geom.distance(x, y) / geom.r;
    if d > 1.0 {
        return cfg.sky_intensity;
    }
    let mu = (1.0 - d * d).sqrt();
    cfg.disk_intensity * (1.0 - cfg.limb_darkening * (1.0 - mu))
}

type P = (f64, f64);

fn bezier(p0: P, p1: P, p2: P, t: f64) -> P {
    let s = 1.0 - t;
    (
        s * s * p0.0 + 2.0 * s * t * p1.0 + t * t * p2.0,
        s * s * p0.1 + 2.0 * s * t * p1.1 + t * t * p2.1,
    )
}

fn bezier_tangent(p0: P, p1: P, p2: P, t: f64) -> P {
    let dx = 2.0 * (1.0 - t) * (p1.0 - p0.0) + 2.0 * t * (p2.0 - p1.0);
    let dy = 2.0 * (1.0 - t) * (p1.1 - p0.1) + 2.0 * t * (p2.1 - p1.1);
    let n = dx.hypot(dy).max(1e-12);
    (dx / n, dy / n)
}

fn segment_distance(p: P, a: P, b: P) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * vx).hypot(p.1 - a.1 - t * vy)
}

/// Sets every pixel whose centre is within `width / 2` of the polyline.
fn stroke(mask: &mut InstanceMask, line: &[P], width: f64) {
    let half = width / 2.0;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in line {
        x0 = x0.min(p.0);
        y0 = y0.min(p.1);
        x1 = x1.max(p.0);
        y1 = y1.max(p.1);
    }
    let clip = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
    let (xa, xb) = (clip((x0 - half).floor(), mask.width), clip((x1 + half).ceil(), mask.width));
    let (ya, yb) = (clip((y0 - half).floor(), mask.height), clip((y1 + half).ceil(), mask.height));
    for y in ya..=yb {
        for x in xa..=xb {
            let p = (x as f64, y as f64);
            let near = if line.len() == 1 {
                (p.0 - line[0].0).hypot(p.1 - line[0].1) <= half
            } else {
                line.windows(2).any(|s| segment_distance(p, s[0], s[1]) <= half)
            };
            if near {
                mask.set(x, y, true);
            }
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

const SPINE_SEGMENTS: usize = 48;

/// Pixels of a filament that lie on the darkened part of the disk.
pub fn filament_mask(shape: &FilamentShape, cfg: &SyntheticConfig, geom: &DiskGeometry) -> InstanceMask {
    let mut mask = InstanceMask::empty(cfg.width, cfg.height);
    stroke(&mut mask, &shape.spine, shape.spine_width);
    for &(base, tip) in &shape.barbs {
        stroke(&mut mask, &[base, tip], cfg.barb_width);
    }
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            if mask.get(x, y) && geom.distance(x, y) > ON_DISK * geom.r {
                mask.set(x, y, false);
            }
        }
    }
    mask
}

const ON_DISK: f64 = 0.98;

fn draw_filament(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, geom: &DiskGeometry) -> FilamentShape {
    let r = geom.r;
    let length = uniform(rng, cfg.spine_length) * r;
    let (mut p0, mut p2) = ((geom.cx, geom.cy), (geom.cx, geom.cy));
    let mut placed = false;
    for _ in 0..32 {
        let rho = r * rng.gen_range(0.0..0.55f64).sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        p0 = (geom.cx + rho * phi.cos(), geom.cy + rho * phi.sin());
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        p2 = (p0.0 + length * theta.cos(), p0.1 + length * theta.sin());
        if (p2.0 - geom.cx).hypot(p2.1 - geom.cy) <= 0.8 * r {
            placed = true;
            break;
        }
    }
    if !placed {
        // Head through the centre, which keeps the chord on the disk.
        let (dx, dy) = (geom.cx - p0.0, geom.cy - p0.1);
        let n = dx.hypot(dy).max(1e-12);
        p2 = (p0.0 + length * dx / n, p0.1 + length * dy / n);
    }
    let bend = uniform(rng, cfg.curvature) * length * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let (tx, ty) = ((p2.0 - p0.0) / length.max(1e-12), (p2.1 - p0.1) / length.max(1e-12));
    let p1 = ((p0.0 + p2.0) / 2.0 - ty * bend, (p0.1 + p2.1) / 2.0 + tx * bend);

    let spine: Vec<P> = (0..=SPINE_SEGMENTS)
        .map(|i| bezier(p0, p1, p2, i as f64 / SPINE_SEGMENTS as f64))
        .collect();
    let spine_width = uniform(rng, cfg.spine_width);
    let n_barbs = rng.gen_range(cfg.barbs[0]..=cfg.barbs[1]);
    let mut barbs = Vec::with_capacity(n_barbs);
    for k in 0..n_barbs {
        let t = (k + 1) as f64 / (n_barbs + 1) as f64;
        let base = bezier(p0, p1, p2, t);
        let (ux, uy) = bezier_tangent(p0, p1, p2, t);
        let side = if cfg.alternate_barbs && k % 2 == 1 { -1.0 } else { 1.0 };
        let a = side * uniform(rng, cfg.barb_angle_deg).to_radians();
        let dir = (ux * a.cos() - uy * a.sin(), ux * a.sin() + uy * a.cos());
        let len = spine_width / 2.0 + uniform(rng, cfg.barb_length);
        let tip = (base.0 + len * dir.0, base.1 + len * dir.1);
        barbs.push((base, tip));
    }
    FilamentShape {
        spine,
        spine_width,
        barbs,
    }
}

/// Renders sample `index` of the dataset described by `cfg`. Each index
/// draws from its own random stream, so samples can be generated in any
/// order.
pub fn generate_one(cfg: &SyntheticConfig, index: usize) -> Result<SyntheticSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (w, h) = (cfg.width, cfg.height);
    let side = w.min(h) as f64;
    let r = uniform(&mut rng, cfg.radius_frac) * side;
    let max_off = (side / 2.0 - r - 1.0).clamp(0.0, 0.08 * side);
    let jitter = |rng: &mut ChaCha8Rng| if max_off > 0.0 { rng.gen_range(-max_off..=max_off) } else { 0.0 };
    let geometry = DiskGeometry {
        cx: (w - 1) as f64 / 2.0 + jitter(&mut rng),
        cy: (h - 1) as f64 / 2.0 + jitter(&mut rng),
        r,
    };
    let n_fil = rng.gen_range(cfg.filaments[0]..=cfg.filaments[1]);
    let (mut instances, mut shapes) = (Vec::with_capacity(n_fil), Vec::with_capacity(n_fil));
    for _ in 0..n_fil {
        let shape = draw_filament(&mut rng, cfg, &geometry);
        let m = filament_mask(&shape, cfg, &geometry);
        if !m.is_empty() {
            instances.push(m);
            shapes.push(shape);
        }
    }
    if instances.is_empty() {
        return Err(Error::invalid("synthetic filaments cover no on-disk pixel"));
    }
    let dark = InstanceMask::union(&instances, w, h)?;
    let clean = GrayImage::from_fn(w, h, |x, y| {
        let bg = disk_background(cfg, &geometry, x, y);
        if dark.get(x, y) {
            bg * (1.0 - cfg.contrast)
        } else {
            bg
        }
    });
    let mut image = clean.clone();
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for v in &mut image.pixels {
            *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(SyntheticSample {
        id: format!("synth-{index:05}"),
        image,
        clean,
        instances,
        shapes,
        geometry,
    })
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<SyntheticSample>> {
    (0..cfg.count).map(|i| generate_one(cfg, i)).collect()
}
