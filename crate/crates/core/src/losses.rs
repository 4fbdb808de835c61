//! Binary cross-entropy and soft Dice on logits.

use crate::error::{Error, Result};
use crate::tensor::{add, sigmoid_scalar, Tensor};

/// The hybrid objective and its two terms. `total` is the sum node of the
/// other two, so its value is exactly `bce + dice`.
pub struct LossValue {
    pub total: Tensor,
    pub bce: Tensor,
    pub dice: Tensor,
}

impl LossValue {
    pub fn values(&self) -> (f64, f64, f64) {
        (self.total.data()[0], self.bce.data()[0], self.dice.data()[0])
    }
}

fn check(logits: &Tensor, target: &Tensor) -> Result<()> {
    if logits.shape() != target.shape() {
        return Err(Error::shape(format!(
            "logits {:?} and target {:?} differ",
            logits.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Mean over all elements of `max(z, 0) − z·t + ln(1 + e^{−|z|})`.
pub fn bce_with_logits(logits: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(logits, target)?;
    let n = logits.numel() as f64;
    let (z, t) = (logits.data(), target.data());
    let total: f64 = z
        .iter()
        .zip(t)
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    let zs = z.to_vec();
    let ts = t.to_vec();
    Tensor::custom_op(vec![total / n], &[1], vec![logits.clone()], move |g| {
        let scale = g[0] / n;
        vec![Some(
            zs.iter()
                .zip(&ts)
                .map(|(&z, &t)| scale * (sigmoid_scalar(z) - t))
                .collect(),
        )]
    })
}

/// `1 − (2·Σp·t + s)/(Σp + Σt + s)` with `p = σ(z)`, summed over the batch.
pub fn dice_loss(logits: &Tensor, target: &Tensor, smooth: f64) -> Result<Tensor> {
    check(logits, target)?;
    let p: Vec<f64> = logits.data().iter().map(|&z| sigmoid_scalar(z)).collect();
    let t = target.data().to_vec();
    let inter: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let sp: f64 = p.iter().sum();
    let st: f64 = t.iter().sum();
    let num = 2.0 * inter + smooth;
    let den = sp + st + smooth;
    Tensor::custom_op(vec![1.0 - num / den], &[1], vec![logits.clone()], move |g| {
        // d/dp of −num/den = −(2t·den − num)/den².
        vec![Some(
            p.iter()
                .zip(&t)
                .map(|(&p, &t)| -g[0] * (2.0 * t * den - num) / (den * den) * p * (1.0 - p))
                .collect(),
        )]
    })
}

/// BCE plus Dice with smoothing 1.
pub fn hybrid_loss(logits: &Tensor, target: &Tensor) -> Result<LossValue> {
    let bce = bce_with_logits(logits, target)?;
    let dice = dice_loss(logits, target, 1.0)?;
    let total = add(&bce, &dice)?;
    Ok(LossValue { total, bce, dice })
}
