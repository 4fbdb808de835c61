//! Mini-batch Adam training with best-validation selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::hybrid_loss;
use crate::metrics::{connected_components, evaluate_dataset, evaluate_image, InstanceMask, MaskSet, ScaleSet};
use crate::model::{ForwardCtx, Model, ModelState};
use crate::tensor::{sigmoid_scalar, Adam, AdamConfig, Tensor};

/// One image with its training target and ground-truth instances, all at the
/// model's input size.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub image: Vec<f64>,
    pub target: Vec<f64>,
    pub instances: MaskSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub threshold: f64,
    pub min_area: usize,
    pub scales: ScaleSet,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-4,
            batch_size: 4,
            seed: 0,
            threshold: 0.5,
            min_area: 10,
            scales: ScaleSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_bce: f64,
    pub train_dice: f64,
    pub val_loss: Option<f64>,
    pub val_miou_pairwise: Option<f64>,
    pub val_miou_multiscale: Option<f64>,
}

pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Total loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Epoch whose weights are in `best_state`; `None` means initialization.
    pub best_epoch: Option<usize>,
    pub best_state: ModelState,
}

fn batch_tensor(model: &Model, rows: &[&[f64]]) -> Result<Tensor> {
    let s = model.spec();
    let (h, w) = (s.input_height, s.input_width);
    let mut data = Vec::with_capacity(rows.len() * h * w);
    for r in rows {
        if r.len() != h * w {
            return Err(Error::shape(format!("example has {} pixels, model expects {h}x{w}", r.len())));
        }
        data.extend_from_slice(r);
    }
    Tensor::new(data, &[rows.len(), s.in_channels, h, w])
}

/// Sigmoid probabilities for each image, in eval mode.
pub fn predict_probabilities(model: &Model, images: &[&[f64]], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let logits = model.forward(&batch_tensor(model, chunk)?, &mut ForwardCtx::eval())?;
        let per = logits.numel() / chunk.len();
        for c in logits.data().chunks(per) {
            out.push(c.iter().map(|&z| sigmoid_scalar(z)).collect());
        }
    }
    Ok(out)
}

/// Hard Dice `2|P∩T| / (|P| + |T|)` of thresholded eval-mode predictions,
/// aggregated over all examples. 1 when both are empty.
pub fn dice_coefficient(model: &Model, examples: &[Example], threshold: f64) -> Result<f64> {
    let images: Vec<&[f64]> = examples.iter().map(|e| e.image.as_slice()).collect();
    let probs = predict_probabilities(model, &images, 4)?;
    let (mut inter, mut total) = (0.0, 0.0);
    for (p, e) in probs.iter().zip(examples) {
        for (&p, &t) in p.iter().zip(&e.target) {
            let p = f64::from(u8::from(p >= threshold));
            inter += p * t;
            total += p + t;
        }
    }
    Ok(if total == 0.0 { 1.0 } else { 2.0 * inter / total })
}

struct ValResult {
    loss: f64,
    pairwise: Option<f64>,
    multiscale: Option<f64>,
}

fn validate(model: &Model, val: &[Example], cfg: &TrainConfig) -> Result<ValResult> {
    let (h, w) = (model.spec().input_height, model.spec().input_width);
    let mut loss_sum = 0.0;
    let mut records = Vec::with_capacity(val.len());
    for chunk in val.chunks(cfg.batch_size.max(1)) {
        let images: Vec<&[f64]> = chunk.iter().map(|e| e.image.as_slice()).collect();
        let targets: Vec<&[f64]> = chunk.iter().map(|e| e.target.as_slice()).collect();
        let x = batch_tensor(model, &images)?;
        let t = batch_tensor(model, &targets)?;
        let logits = model.forward(&x, &mut ForwardCtx::eval())?;
        loss_sum += hybrid_loss(&logits, &t)?.values().0 * chunk.len() as f64;
        for (e, z) in chunk.iter().zip(logits.data().chunks(h * w)) {
            let probs: Vec<f64> = z.iter().map(|&v| sigmoid_scalar(v)).collect();
            let binary = InstanceMask::from_probabilities(w, h, &probs, cfg.threshold)?;
            let pred = connected_components(&binary, cfg.min_area);
            records.push(evaluate_image(e.id.clone(), &e.instances, &pred, &cfg.scales)?);
        }
    }
    let (pairwise, multiscale) = match evaluate_dataset(records, &cfg.scales) {
        Ok(r) => (Some(r.miou_pairwise), Some(r.miou_multiscale)),
        Err(Error::NoEvaluablePairs) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(ValResult {
        loss: loss_sum / val.len() as f64,
        pairwise,
        multiscale,
    })
}

/// Trains `model` in place. On return the model holds the final weights and
/// `best_state` the weights with the lowest validation loss (the final ones
/// when `val` is empty). A non-finite loss restores the last completed epoch
/// and fails with [`Error::NonFiniteLoss`].
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if train_set.is_empty() && cfg.epochs > 0 {
        return Err(Error::invalid("empty training set"));
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::invalid(format!("learning rate {} must be positive", cfg.lr)));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    let mut last_good = model.state();
    let mut best_state = last_good.clone();
    let mut best_epoch = None;
    let mut best_val = f64::INFINITY;
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut sum_bce, mut sum_dice, mut seen) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let images: Vec<&[f64]> = batch.iter().map(|&i| train_set[i].image.as_slice()).collect();
            let targets: Vec<&[f64]> = batch.iter().map(|&i| train_set[i].target.as_slice()).collect();
            let x = batch_tensor(model, &images)?;
            let t = batch_tensor(model, &targets)?;
            let mut ctx = ForwardCtx::train(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step));
            let logits = model.forward(&x, &mut ctx)?;
            let loss = hybrid_loss(&logits, &t)?;
            let (total, bce, dice) = loss.values();
            if !total.is_finite() {
                model.load_state(&last_good)?;
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step as usize,
                });
            }
            loss.total.backward()?;
            adam.step(&mut model.params_mut())?;
            step_losses.push(total);
            let n = batch.len() as f64;
            sum += total * n;
            sum_bce += bce * n;
            sum_dice += dice * n;
            seen += batch.len();
            step += 1;
        }
        let n = seen as f64;
        let mut record = EpochRecord {
            epoch: epoch + 1,
            train_loss: sum / n,
            train_bce: sum_bce / n,
            train_dice: sum_dice / n,
            val_loss: None,
            val_miou_pairwise: None,
            val_miou_multiscale: None,
        };
        let score = if val.is_empty() {
            f64::NEG_INFINITY
        } else {
            let v = validate(model, val, cfg)?;
            record.val_loss = Some(v.loss);
            record.val_miou_pairwise = v.pairwise;
            record.val_miou_multiscale = v.multiscale;
            v.loss
        };
        last_good = model.state();
        if val.is_empty() || score < best_val {
            best_val = score;
            best_state = last_good.clone();
            best_epoch = Some(epoch + 1);
        }
        log::info!(
            "epoch {}: train {:.5} (bce {:.5}, dice {:.5}) val {:?}",
            record.epoch,
            record.train_loss,
            record.train_bce,
            record.train_dice,
            record.val_loss
        );
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        history,
        step_losses,
        best_epoch,
        best_state,
    })
}

/// Repeated Adam steps on one fixed batch holding every example, with the
/// same dropout mask each step. Returns the loss before each step.
pub fn fit_fixed_batch(model: &mut Model, examples: &[Example], steps: usize, lr: f64, seed: u64) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::invalid("fixed batch is empty"));
    }
    let images: Vec<&[f64]> = examples.iter().map(|e| e.image.as_slice()).collect();
    let targets: Vec<&[f64]> = examples.iter().map(|e| e.target.as_slice()).collect();
    let x = batch_tensor(model, &images)?;
    let t = batch_tensor(model, &targets)?;
    let mut adam = Adam::new(AdamConfig {
        lr,
        ..AdamConfig::default()
    });
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let logits = model.forward(&x, &mut ForwardCtx::train(seed))?;
        let loss = hybrid_loss(&logits, &t)?;
        let total = loss.values().0;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: 0, step });
        }
        loss.total.backward()?;
        adam.step(&mut model.params_mut())?;
        losses.push(total);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, VariantKind};

    fn toy(n: usize, size: usize) -> Vec<Example> {
        (0..n)
            .map(|k| {
                let target: Vec<f64> = (0..size * size)
                    .map(|i| f64::from(u8::from((i % size + k) % 5 == 0)))
                    .collect();
                let image = target.iter().map(|t| 0.8 - 0.5 * t).collect();
                let inst = InstanceMask::new(size, size, target.iter().map(|&t| t > 0.5).collect()).unwrap();
                Example {
                    id: format!("toy{k}"),
                    image,
                    target,
                    instances: vec![inst],
                }
            })
            .collect()
    }

    fn model() -> Model {
        Model::new(ModelSpec::scaled(VariantKind::Edgeattnet, 4, 16).with_input_size(16, 16), 0).unwrap()
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let mut m = model();
        let init = m.state();
        let out = train(&mut m, &toy(2, 16), &[], &TrainConfig { epochs: 0, ..Default::default() }, |_| {}).unwrap();
        assert!(out.history.is_empty() && out.best_epoch.is_none());
        assert_eq!(out.best_state, init);
        assert_eq!(m.state(), init);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = TrainConfig {
            epochs: 2,
            lr: 1e-3,
            batch_size: 2,
            seed: 4,
            ..Default::default()
        };
        let data = toy(3, 16);
        let run = || {
            let mut m = model();
            train(&mut m, &data, &data[..1], &cfg, |_| {}).unwrap().step_losses
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
    }

    #[test]
    fn best_state_tracks_lowest_validation_loss() {
        let cfg = TrainConfig {
            epochs: 3,
            lr: 1e-3,
            batch_size: 2,
            ..Default::default()
        };
        let data = toy(4, 16);
        let mut m = model();
        let mut seen = Vec::new();
        let out = train(&mut m, &data[..3], &data[3..], &cfg, |r| seen.push(r.epoch)).unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
        let losses: Vec<f64> = out.history.iter().map(|r| r.val_loss.unwrap()).collect();
        let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let idx = out.best_epoch.unwrap() - 1;
        assert_eq!(losses[idx], best);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut m = model();
        let data = toy(1, 16);
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(train(&mut m, &data, &[], &bad, |_| {}).is_err());
        let bad = TrainConfig { lr: -1.0, ..Default::default() };
        assert!(train(&mut m, &data, &[], &bad, |_| {}).is_err());
    }

    #[test]
    fn non_finite_input_aborts_and_restores() {
        let mut m = model();
        let mut data = toy(1, 16);
        data[0].image[0] = f64::NAN;
        let before = m.state();
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        let err = train(&mut m, &data, &[], &cfg, |_| {}).err().unwrap();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, step: 0 }));
        assert_eq!(m.state(), before);
    }

    #[test]
    fn fixed_batch_loss_decreases() {
        let mut m = model();
        let losses = fit_fixed_batch(&mut m, &toy(2, 16), 12, 1e-3, 9).unwrap();
        assert_eq!(losses.len(), 12);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn dice_is_one_when_prediction_and_target_are_empty() {
        let m = model();
        let mut data = toy(1, 16);
        data[0].target = vec![0.0; 256];
        // An untrained net predicts something; all-empty target and prediction
        // is the only case with a closed-form answer.
        let d = dice_coefficient(&m, &data, 1.1).unwrap();
        assert_eq!(d, 1.0);
    }
}
