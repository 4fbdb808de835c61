use serde::{Deserialize, Serialize};

use super::{gemm, Tensor};
use crate::error::{Error, Result};

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

fn im2col(src: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let plane = g.oh * g.ow;
    for c in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[base + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dst: &mut [f64]) {
    let plane = g.oh * g.ow;
    for c in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[base + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation of `B×Cin×H×W` input with a `Cout×Cin×k×k` kernel.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (si, sw) = (input.shape(), weight.shape());
    if si.len() != 4 || sw.len() != 4 || sw[2] != sw[3] {
        return Err(Error::shape(format!("conv2d: input {si:?}, weight {sw:?}")));
    }
    if si[1] != sw[1] {
        return Err(Error::shape(format!(
            "conv2d: input has {} channels but weight expects {}",
            si[1], sw[1]
        )));
    }
    if bias.shape() != [sw[0]] {
        return Err(Error::shape(format!(
            "conv2d: bias {:?} for {} output channels",
            bias.shape(),
            sw[0]
        )));
    }
    if stride == 0 || si[2] + 2 * padding < sw[2] || si[3] + 2 * padding < sw[3] {
        return Err(Error::shape(format!(
            "conv2d: kernel {} does not fit {}x{} with padding {padding}",
            sw[2], si[2], si[3]
        )));
    }
    let (batch, cout, k) = (si[0], sw[0], sw[2]);
    let g = ConvGeom {
        cin: si[1],
        h: si[2],
        w: si[3],
        k,
        stride,
        pad: padding,
        oh: (si[2] + 2 * padding - k) / stride + 1,
        ow: (si[3] + 2 * padding - k) / stride + 1,
    };
    let direct = k == 1 && stride == 1 && padding == 0;
    let (ckk, plane, in_len) = (g.cin * k * k, g.oh * g.ow, g.cin * g.h * g.w);
    let mut out = vec![0.0; batch * cout * plane];
    let mut cols = if direct { Vec::new() } else { vec![0.0; ckk * plane] };
    for b in 0..batch {
        let src = &input.data()[b * in_len..(b + 1) * in_len];
        let dst = &mut out[b * cout * plane..(b + 1) * cout * plane];
        for (co, row) in dst.chunks_mut(plane).enumerate() {
            row.fill(bias.data()[co]);
        }
        let x = if direct {
            src
        } else {
            im2col(src, &g, &mut cols);
            &cols
        };
        gemm(cout, ckk, plane, weight.data(), false, x, false, dst, 1.0);
    }

    let (ci, cw, cb) = (input.clone(), weight.clone(), bias.clone());
    Ok(Tensor::from_op(
        out,
        vec![batch, cout, g.oh, g.ow],
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |grad| {
            let mut gi = ci.requires_grad().then(|| vec![0.0; ci.numel()]);
            let mut gw = cw.requires_grad().then(|| vec![0.0; cw.numel()]);
            let mut cols = vec![0.0; if direct { 0 } else { ckk * plane }];
            let mut dcols = vec![0.0; if gi.is_some() && !direct { ckk * plane } else { 0 }];
            for b in 0..batch {
                let go = &grad[b * cout * plane..(b + 1) * cout * plane];
                if let Some(gw) = gw.as_mut() {
                    let src = &ci.data()[b * in_len..(b + 1) * in_len];
                    let x = if direct {
                        src
                    } else {
                        im2col(src, &g, &mut cols);
                        &cols
                    };
                    gemm(cout, plane, ckk, go, false, x, true, gw, 1.0);
                }
                if let Some(gi) = gi.as_mut() {
                    let dst = &mut gi[b * in_len..(b + 1) * in_len];
                    if direct {
                        gemm(ckk, cout, plane, cw.data(), true, go, false, dst, 0.0);
                    } else {
                        gemm(ckk, cout, plane, cw.data(), true, go, false, &mut dcols, 0.0);
                        col2im(&dcols, &g, dst);
                    }
                }
            }
            let gb = cb.requires_grad().then(|| {
                let mut gb = vec![0.0; cout];
                for (i, row) in grad.chunks(plane).enumerate() {
                    gb[i % cout] += row.iter().sum::<f64>();
                }
                gb
            });
            vec![gi, gw, gb]
        }),
    ))
}

/// Transposed convolution with a 2×2 kernel and stride 2; doubles both
/// spatial extents. The weight is laid out `Cin×Cout×2×2`.
pub fn conv_transpose2d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (si, sw) = (input.shape(), weight.shape());
    if si.len() != 4 || sw.len() != 4 || sw[2..] != [2, 2] || si[1] != sw[0] {
        return Err(Error::shape(format!(
            "conv_transpose2d: input {si:?}, weight {sw:?}"
        )));
    }
    if bias.shape() != [sw[1]] {
        return Err(Error::shape(format!(
            "conv_transpose2d: bias {:?} for {} output channels",
            bias.shape(),
            sw[1]
        )));
    }
    let (batch, cin, h, w, cout) = (si[0], si[1], si[2], si[3], sw[1]);
    let (hw, (oh, ow)) = (h * w, (2 * h, 2 * w));
    let rows = cout * 4;
    let mut out = vec![0.0; batch * cout * oh * ow];
    let mut y = vec![0.0; rows * hw];
    for b in 0..batch {
        let x = &input.data()[b * cin * hw..(b + 1) * cin * hw];
        gemm(rows, cin, hw, weight.data(), true, x, false, &mut y, 0.0);
        let dst = &mut out[b * cout * oh * ow..(b + 1) * cout * oh * ow];
        for co in 0..cout {
            let bv = bias.data()[co];
            for d in 0..4 {
                let (dy, dx) = (d / 2, d % 2);
                let src = &y[(co * 4 + d) * hw..(co * 4 + d + 1) * hw];
                for i in 0..h {
                    for j in 0..w {
                        dst[(co * oh + 2 * i + dy) * ow + 2 * j + dx] = src[i * w + j] + bv;
                    }
                }
            }
        }
    }
    let (ci, cw, cb) = (input.clone(), weight.clone(), bias.clone());
    Ok(Tensor::from_op(
        out,
        vec![batch, cout, oh, ow],
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |grad| {
            let mut gi = ci.requires_grad().then(|| vec![0.0; ci.numel()]);
            let mut gw = cw.requires_grad().then(|| vec![0.0; cw.numel()]);
            let mut gb = cb.requires_grad().then(|| vec![0.0; cout]);
            let mut dy = vec![0.0; rows * hw];
            for b in 0..batch {
                let go = &grad[b * cout * oh * ow..(b + 1) * cout * oh * ow];
                for co in 0..cout {
                    for d in 0..4 {
                        let (oy, ox) = (d / 2, d % 2);
                        let dst = &mut dy[(co * 4 + d) * hw..(co * 4 + d + 1) * hw];
                        for i in 0..h {
                            for j in 0..w {
                                dst[i * w + j] = go[(co * oh + 2 * i + oy) * ow + 2 * j + ox];
                            }
                        }
                    }
                }
                if let Some(gb) = gb.as_mut() {
                    for (co, s) in gb.iter_mut().enumerate() {
                        *s += dy[co * 4 * hw..(co + 1) * 4 * hw].iter().sum::<f64>();
                    }
                }
                if let Some(gi) = gi.as_mut() {
                    let dst = &mut gi[b * cin * hw..(b + 1) * cin * hw];
                    gemm(cin, rows, hw, cw.data(), false, &dy, false, dst, 0.0);
                }
                if let Some(gw) = gw.as_mut() {
                    let x = &ci.data()[b * cin * hw..(b + 1) * cin * hw];
                    gemm(cin, hw, rows, x, false, &dy, true, gw, 1.0);
                }
            }
            vec![gi, gw, gb]
        }),
    ))
}

/// 2×2 max pooling with stride 2. Ties go to the first position in
/// row-major window order.
pub fn maxpool2x2(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2x2 needs rank 4 with even H and W, got {s:?}"
        )));
    }
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    let data = input.data();
    for p in 0..planes {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for idx in [
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    let n = input.numel();
    Ok(Tensor::from_op(
        out,
        vec![s[0], s[1], oh, ow],
        vec![input.clone()],
        Box::new(move |g| {
            let mut gi = vec![0.0; n];
            for (&idx, v) in argmax.iter().zip(g) {
                gi[idx] += v;
            }
            vec![Some(gi)]
        }),
    ))
}

/// Running per-channel statistics of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Batch normalization over `B×H×W` per channel. In training mode the batch
/// statistics are used and folded into `stats` (unbiased variance); in eval
/// mode `stats` is read only.
pub fn batchnorm2d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut BatchNormStats,
    training: bool,
) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!("batchnorm2d needs rank 4, got {s:?}")));
    }
    let (batch, c, plane) = (s[0], s[1], s[2] * s[3]);
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c || stats.var.len() != c {
        return Err(Error::shape(format!(
            "batchnorm2d: {c} channels, gamma {:?}, beta {:?}, stats {}",
            gamma.shape(),
            beta.shape(),
            stats.mean.len()
        )));
    }
    let count = batch * plane;
    let data = input.data();
    let channel_iter = move |ch: usize| {
        (0..batch).flat_map(move |b| {
            let start = (b * c + ch) * plane;
            start..start + plane
        })
    };
    let mut mean = vec![0.0; c];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        if training {
            let mu = channel_iter(ch).map(|i| data[i]).sum::<f64>() / count as f64;
            let var = channel_iter(ch).map(|i| (data[i] - mu).powi(2)).sum::<f64>() / count as f64;
            mean[ch] = mu;
            inv_std[ch] = 1.0 / (var + stats.eps).sqrt();
            let unbiased = if count > 1 {
                var * count as f64 / (count - 1) as f64
            } else {
                var
            };
            stats.mean[ch] = (1.0 - stats.momentum) * stats.mean[ch] + stats.momentum * mu;
            stats.var[ch] = (1.0 - stats.momentum) * stats.var[ch] + stats.momentum * unbiased;
        } else {
            mean[ch] = stats.mean[ch];
            inv_std[ch] = 1.0 / (stats.var[ch] + stats.eps).sqrt();
        }
    }
    let mut xhat = vec![0.0; data.len()];
    let mut out = vec![0.0; data.len()];
    for ch in 0..c {
        let (gm, bt) = (gamma.data()[ch], beta.data()[ch]);
        for i in channel_iter(ch) {
            let h = (data[i] - mean[ch]) * inv_std[ch];
            xhat[i] = h;
            out[i] = gm * h + bt;
        }
    }
    let (ci, cg, cb) = (input.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        out,
        s.to_vec(),
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let mut sum_g = vec![0.0; c];
            let mut sum_gh = vec![0.0; c];
            for ch in 0..c {
                for i in channel_iter(ch) {
                    sum_g[ch] += g[i];
                    sum_gh[ch] += g[i] * xhat[i];
                }
            }
            let gi = ci.requires_grad().then(|| {
                let mut gi = vec![0.0; g.len()];
                for ch in 0..c {
                    let gm = cg.data()[ch];
                    if training {
                        let n = count as f64;
                        let scale = gm * inv_std[ch] / n;
                        for i in channel_iter(ch) {
                            gi[i] = scale * (n * g[i] - sum_g[ch] - xhat[i] * sum_gh[ch]);
                        }
                    } else {
                        for i in channel_iter(ch) {
                            gi[i] = g[i] * gm * inv_std[ch];
                        }
                    }
                }
                gi
            });
            vec![gi, cg.requires_grad().then(|| sum_gh.clone()), cb.requires_grad().then(|| sum_g.clone())]
        }),
    ))
}
