use rand::Rng;

use super::{gemm, numel, Tensor};
use crate::error::{Error, Result};

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Elementwise sum. `b` may also be a trailing-dimension suffix of `a`, in
/// which case it is broadcast over the leading dimensions.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb {
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let (na, nb) = (a.requires_grad(), b.requires_grad());
        return Ok(Tensor::from_op(
            data,
            sa.to_vec(),
            vec![a.clone(), b.clone()],
            Box::new(move |g| {
                vec![na.then(|| g.to_vec()), nb.then(|| g.to_vec())]
            }),
        ));
    }
    if sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb {
        let inner = b.numel();
        let bd = b.data();
        let data = a
            .data()
            .chunks(inner)
            .flat_map(|row| row.iter().zip(bd).map(|(x, y)| x + y))
            .collect();
        let (na, nb) = (a.requires_grad(), b.requires_grad());
        return Ok(Tensor::from_op(
            data,
            sa.to_vec(),
            vec![a.clone(), b.clone()],
            Box::new(move |g| {
                let gb = nb.then(|| {
                    let mut acc = vec![0.0; inner];
                    for row in g.chunks(inner) {
                        acc.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                    acc
                });
                vec![na.then(|| g.to_vec()), gb]
            }),
        ));
    }
    Err(Error::shape(format!("add: cannot broadcast {sb:?} onto {sa:?}")))
}

/// Elementwise product of equally shaped tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let (ca, cb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = ca.requires_grad().then(|| {
                g.iter().zip(cb.data()).map(|(g, y)| g * y).collect()
            });
            let gb = cb.requires_grad().then(|| {
                g.iter().zip(ca.data()).map(|(g, x)| g * x).collect()
            });
            vec![ga, gb]
        }),
    ))
}

pub fn mul_scalar(a: &Tensor, s: f64) -> Tensor {
    let data = a.data().iter().map(|x| x * s).collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| vec![Some(g.iter().map(|v| v * s).collect())]),
    )
}

/// Sum of all elements as a one-element tensor.
pub fn sum(a: &Tensor) -> Tensor {
    let n = a.numel();
    Tensor::from_op(
        vec![a.data().iter().sum()],
        vec![1],
        vec![a.clone()],
        Box::new(move |g| vec![Some(vec![g[0]; n])]),
    )
}

pub fn mean(a: &Tensor) -> Tensor {
    let n = a.numel();
    mul_scalar(&sum(a), 1.0 / n as f64)
}

pub fn relu(a: &Tensor) -> Tensor {
    // NaN propagates so a poisoned forward pass surfaces as a non-finite loss.
    let data = a.data().iter().map(|&x| if x < 0.0 { 0.0 } else { x }).collect();
    let ca = a.clone();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            vec![Some(
                g.iter()
                    .zip(ca.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
            )]
        }),
    )
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    let out: Vec<f64> = a.data().iter().map(|&x| sigmoid_scalar(x)).collect();
    let y = out.clone();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            vec![Some(
                g.iter().zip(&y).map(|(g, y)| g * y * (1.0 - y)).collect(),
            )]
        }),
    )
}

/// Same data under a new shape with equal element count.
pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if numel(shape) != a.numel() || shape.is_empty() || shape.len() > 4 {
        return Err(Error::shape(format!(
            "reshape: {:?} -> {shape:?}",
            a.shape()
        )));
    }
    Ok(Tensor::from_op(
        a.data().to_vec(),
        shape.to_vec(),
        vec![a.clone()],
        Box::new(|g| vec![Some(g.to_vec())]),
    ))
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` (of `shape`) into the axis order `perm`.
fn permute_data(src: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let walk: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; shape.len()];
    let mut offset = 0usize;
    for _ in 0..src.len() {
        out.push(src[offset]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            offset += walk[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= walk[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

/// Reorders axes: output axis `i` is input axis `perm[i]`.
pub fn permute(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = a.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::shape(format!(
            "permute: {perm:?} is not a permutation of rank {rank}"
        )));
    }
    let (data, out_shape) = permute_data(a.data(), a.shape(), perm);
    let mut inverse = vec![0; rank];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let out_shape_c = out_shape.clone();
    Ok(Tensor::from_op(
        data,
        out_shape,
        vec![a.clone()],
        Box::new(move |g| vec![Some(permute_data(g, &out_shape_c, &inverse).0)]),
    ))
}

pub fn transpose_last2(a: &Tensor) -> Result<Tensor> {
    let r = a.rank();
    if r < 2 {
        return Err(Error::shape("transpose_last2 needs rank >= 2"));
    }
    let mut perm: Vec<usize> = (0..r).collect();
    perm.swap(r - 2, r - 1);
    permute(a, &perm)
}

/// Batched matrix product. `a` is `[.., M, K]`; `b` is either `[K, N]`
/// (shared across the batch) or `[.., K, N]` with the same leading dims.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sb.len() < 2 {
        return Err(Error::shape("matmul needs rank >= 2 operands"));
    }
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
    if k != kb {
        return Err(Error::shape(format!(
            "matmul: inner dims differ, {sa:?} x {sb:?}"
        )));
    }
    let lead = &sa[..sa.len() - 2];
    let batches = numel(lead);
    let shared = sb.len() == 2;
    if !shared && sb[..sb.len() - 2] != *lead {
        return Err(Error::shape(format!(
            "matmul: batch dims differ, {sa:?} x {sb:?}"
        )));
    }
    let mut out = vec![0.0; batches * m * n];
    for i in 0..batches {
        let bo = if shared { 0 } else { i * k * n };
        gemm(
            m,
            k,
            n,
            &a.data()[i * m * k..],
            false,
            &b.data()[bo..],
            false,
            &mut out[i * m * n..],
            0.0,
        );
    }
    let mut out_shape = lead.to_vec();
    out_shape.extend([m, n]);
    let (ca, cb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        out,
        out_shape,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = ca.requires_grad().then(|| {
                let mut ga = vec![0.0; batches * m * k];
                for i in 0..batches {
                    let bo = if shared { 0 } else { i * k * n };
                    gemm(m, n, k, &g[i * m * n..], false, &cb.data()[bo..], true, &mut ga[i * m * k..], 0.0);
                }
                ga
            });
            let gb = cb.requires_grad().then(|| {
                let mut gb = vec![0.0; cb.numel()];
                for i in 0..batches {
                    let (bo, beta) = if shared { (0, 1.0) } else { (i * k * n, 0.0) };
                    gemm(k, m, n, &ca.data()[i * m * k..], true, &g[i * m * n..], false, &mut gb[bo..], beta);
                }
                gb
            });
            vec![ga, gb]
        }),
    ))
}

/// `x·Wᵀ + b` over the last dimension, with `W` of shape `[out, in]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let sx = x.shape();
    let sw = weight.shape();
    if sw.len() != 2 || sx[sx.len() - 1] != sw[1] || bias.shape() != [sw[0]] {
        return Err(Error::shape(format!(
            "linear: input {sx:?}, weight {sw:?}, bias {:?}",
            bias.shape()
        )));
    }
    let (k, n) = (sw[1], sw[0]);
    let m = x.numel() / k;
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, x.data(), false, weight.data(), true, &mut out, 0.0);
    for row in out.chunks_mut(n) {
        row.iter_mut().zip(bias.data()).for_each(|(o, b)| *o += b);
    }
    let mut out_shape = sx.to_vec();
    *out_shape.last_mut().expect("rank >= 1") = n;
    let (cx, cw, cb) = (x.clone(), weight.clone(), bias.clone());
    Ok(Tensor::from_op(
        out,
        out_shape,
        vec![x.clone(), weight.clone(), bias.clone()],
        Box::new(move |g| {
            let gx = cx.requires_grad().then(|| {
                let mut gx = vec![0.0; m * k];
                gemm(m, n, k, g, false, cw.data(), false, &mut gx, 0.0);
                gx
            });
            let gw = cw.requires_grad().then(|| {
                let mut gw = vec![0.0; n * k];
                gemm(n, m, k, g, true, cx.data(), false, &mut gw, 0.0);
                gw
            });
            let gb = cb.requires_grad().then(|| {
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
                gb
            });
            vec![gx, gw, gb]
        }),
    ))
}

pub fn softmax_lastdim(a: &Tensor) -> Tensor {
    let d = *a.shape().last().expect("rank >= 1");
    let mut out = a.data().to_vec();
    for row in out.chunks_mut(d) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    let y = out.clone();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; g.len()];
            for ((gx, g), y) in gx.chunks_mut(d).zip(g.chunks(d)).zip(y.chunks(d)) {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    gx[i] = y[i] * (g[i] - dot);
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// Layer normalization over the last dimension with a learned per-feature
/// scale and shift.
pub fn layernorm_lastdim(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let d = *x.shape().last().expect("rank >= 1");
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape(format!(
            "layernorm: features {d}, gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let rows = x.numel() / d;
    let mut xhat = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    for (r, (src, dst)) in x.data().chunks(d).zip(xhat.chunks_mut(d)).enumerate() {
        let mu = src.iter().sum::<f64>() / d as f64;
        let var = src.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for (o, v) in dst.iter_mut().zip(src) {
            *o = (v - mu) * is;
        }
    }
    let out: Vec<f64> = xhat
        .chunks(d)
        .flat_map(|row| {
            row.iter()
                .zip(gamma.data())
                .zip(beta.data())
                .map(|((h, g), b)| h * g + b)
        })
        .collect();
    let (cx, cg, cb) = (x.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        out,
        x.shape().to_vec(),
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let gm = cg.data();
            let gx = cx.requires_grad().then(|| {
                let mut gx = vec![0.0; g.len()];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for i in 0..d {
                        let dh = gr[i] * gm[i];
                        s1 += dh;
                        s2 += dh * hr[i];
                    }
                    let scale = inv_std[r] / d as f64;
                    for i in 0..d {
                        let dh = gr[i] * gm[i];
                        gx[r * d + i] = scale * (d as f64 * dh - s1 - hr[i] * s2);
                    }
                }
                gx
            });
            let gg = cg.requires_grad().then(|| {
                let mut acc = vec![0.0; d];
                for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for i in 0..d {
                        acc[i] += gr[i] * hr[i];
                    }
                }
                acc
            });
            let gb = cb.requires_grad().then(|| {
                let mut acc = vec![0.0; d];
                for gr in g.chunks(d) {
                    acc.iter_mut().zip(gr).for_each(|(a, v)| *a += v);
                }
                acc
            });
            vec![gx, gg, gb]
        }),
    ))
}

/// Inverted dropout. Identity when not training or when `p == 0`.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, p: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout p must lie in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.numel())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok(Tensor::from_op(
        data,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g| vec![Some(g.iter().zip(&mask).map(|(g, m)| g * m).collect())]),
    ))
}

/// Concatenates two `B×C×H×W` tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(Error::shape(format!("concat_channels: {sa:?} and {sb:?}")));
    }
    let batch = sa[0];
    let (ca_len, cb_len) = (a.numel() / batch, b.numel() / batch);
    let mut out = Vec::with_capacity(a.numel() + b.numel());
    for i in 0..batch {
        out.extend_from_slice(&a.data()[i * ca_len..(i + 1) * ca_len]);
        out.extend_from_slice(&b.data()[i * cb_len..(i + 1) * cb_len]);
    }
    let shape = vec![batch, sa[1] + sb[1], sa[2], sa[3]];
    let (na, nb) = (a.requires_grad(), b.requires_grad());
    Ok(Tensor::from_op(
        out,
        shape,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let stride = ca_len + cb_len;
            let ga = na.then(|| {
                (0..batch)
                    .flat_map(|i| g[i * stride..i * stride + ca_len].iter().copied())
                    .collect()
            });
            let gb = nb.then(|| {
                (0..batch)
                    .flat_map(|i| g[i * stride + ca_len..(i + 1) * stride].iter().copied())
                    .collect()
            });
            vec![ga, gb]
        }),
    ))
}

/// `B×C×H×W → B×(H·W)×C`: one token per spatial position.
pub fn flatten_spatial(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!("flatten_spatial needs rank 4, got {s:?}")));
    }
    let r = reshape(x, &[s[0], s[1], s[2] * s[3]])?;
    permute(&r, &[0, 2, 1])
}

/// Inverse of [`flatten_spatial`]: `B×(H·W)×C → B×C×H×W`.
pub fn unflatten_spatial(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 || s[1] != height * width {
        return Err(Error::shape(format!(
            "unflatten_spatial: {s:?} cannot become {height}x{width}"
        )));
    }
    let p = permute(x, &[0, 2, 1])?;
    reshape(&p, &[s[0], s[2], height, width])
}

/// Source taps for half-pixel-centred bilinear sampling along one axis.
fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling of the spatial axes of a `B×C×H×W` tensor
/// (half-pixel centres, no corner alignment).
pub fn bilinear_resize(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || out_h == 0 || out_w == 0 || s[2] == 0 || s[3] == 0 {
        return Err(Error::shape(format!(
            "bilinear_resize: {s:?} -> {out_h}x{out_w}"
        )));
    }
    let (planes, ih, iw) = (s[0] * s[1], s[2], s[3]);
    let ty = bilinear_taps(ih, out_h);
    let tx = bilinear_taps(iw, out_w);
    let mut out = vec![0.0; planes * out_h * out_w];
    for p in 0..planes {
        let src = &x.data()[p * ih * iw..(p + 1) * ih * iw];
        let dst = &mut out[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let top = src[y0 * iw + x0] * (1.0 - lx) + src[y0 * iw + x1] * lx;
                let bot = src[y1 * iw + x0] * (1.0 - lx) + src[y1 * iw + x1] * lx;
                dst[oy * out_w + ox] = top * (1.0 - ly) + bot * ly;
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![s[0], s[1], out_h, out_w],
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; planes * ih * iw];
            for p in 0..planes {
                let gs = &g[p * out_h * out_w..(p + 1) * out_h * out_w];
                let gd = &mut gx[p * ih * iw..(p + 1) * ih * iw];
                for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                        let v = gs[oy * out_w + ox];
                        gd[y0 * iw + x0] += v * (1.0 - ly) * (1.0 - lx);
                        gd[y0 * iw + x1] += v * (1.0 - ly) * lx;
                        gd[y1 * iw + x0] += v * ly * (1.0 - lx);
                        gd[y1 * iw + x1] += v * ly * lx;
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::leaf((0..numel(shape)).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = Tensor::new(vec![0.0; 3], &[1, 3]).unwrap();
        let y = softmax_lastdim(&x);
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_positive() {
        let x = rand_tensor(&[4, 7], 3);
        let big = mul_scalar(&x, 20.0);
        let y = softmax_lastdim(&big);
        for row in y.data().chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn flatten_unflatten_round_trip_is_exact() {
        let x = rand_tensor(&[2, 8, 4, 4], 11);
        let f = flatten_spatial(&x).unwrap();
        assert_eq!(f.shape(), &[2, 16, 8]);
        // token (b, h*W + w) holds channel c of pixel (h, w)
        assert_eq!(f.data()[(16 + 5) * 8 + 3], x.data()[(8 + 3) * 16 + 5]);
        let u = unflatten_spatial(&f, 4, 4).unwrap();
        assert_eq!(u.data(), x.data());
        assert_eq!(u.shape(), x.shape());
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let x = rand_tensor(&[1, 2, 5, 3], 2);
        let y = bilinear_resize(&x, 5, 3).unwrap();
        assert_eq!(y.data(), x.data());
        let c = Tensor::full(&[1, 1, 6, 6], 0.37).unwrap();
        for (h, w) in [(1, 1), (3, 9), (13, 2), (6, 6)] {
            let r = bilinear_resize(&c, h, w).unwrap();
            assert!(r.data().iter().all(|v| (v - 0.37).abs() < 1e-15));
        }
    }

    #[test]
    fn dropout_rejects_bad_probability_and_is_identity_in_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&[10], 1);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
        let y = dropout(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        let z = dropout(&x, 0.5, true, &mut rng).unwrap();
        for (a, b) in z.data().iter().zip(x.data()) {
            assert!(*a == 0.0 || (a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_shapes_and_values() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::new(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
        let bad = Tensor::new(vec![1.0; 6], &[3, 2]).unwrap();
        assert!(matmul(&a, &bad).is_err());
    }

    #[test]
    fn permute_rejects_non_permutation() {
        let x = rand_tensor(&[2, 3, 4], 0);
        assert!(permute(&x, &[0, 0, 1]).is_err());
        assert!(permute(&x, &[0, 1]).is_err());
        let p = permute(&x, &[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.data()[(3 * 2 + 1) * 3 + 2], x.data()[(3 + 2) * 4 + 3]);
    }

    #[test]
    fn add_broadcasts_suffix() {
        let a = Tensor::new(vec![1.0; 6], &[2, 3]).unwrap();
        let b = Tensor::leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let c = add(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0, 3.0, 4.0, 2.0, 3.0, 4.0]);
        sum(&c).backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0; 3]);
        let bad = Tensor::new(vec![1.0; 2], &[2]).unwrap();
        assert!(add(&a, &bad).is_err());
    }
}
