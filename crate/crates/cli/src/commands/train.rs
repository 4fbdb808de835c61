use std::path::Path;

use anyhow::{anyhow, Context};
use edgeattnet::data::{split, DatasetIndex, Sample};
use edgeattnet::model::{checkpoint, Model};
use edgeattnet::train::{dice_coefficient, train, EpochRecord, Example};
use edgeattnet::Error;
use serde::{Deserialize, Serialize};

use super::write_json;
use crate::{CliError, RunConfig};

pub const LOG_FILE: &str = "train_log.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
pub const SUMMARY_FILE: &str = "summary.json";

/// Image ids of each partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub params: u64,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub final_train_loss: Option<f64>,
    /// Hard Dice of the best checkpoint on the training split.
    pub best_train_dice: f64,
}

fn default_split(n: usize) -> [usize; 3] {
    let train = n * 3 / 4;
    let val = n / 8;
    [train, val, n - train - val]
}

fn check_size(samples: &[Sample], size: usize) -> Result<(), CliError> {
    match samples.iter().find(|s| s.image.width != size || s.image.height != size) {
        Some(s) => Err(CliError::usage(format!(
            "sample {} is {}x{} but --input-size is {size}",
            s.id, s.image.width, s.image.height
        ))),
        None => Ok(()),
    }
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let data_dir = cfg.require(&cfg.input, "input")?;
    let out = cfg.require(&cfg.output, "output")?;
    let spec = cfg.model_spec()?;
    let index = DatasetIndex::load(data_dir)?;
    let [n_train, n_val, n_test] = cfg.split.unwrap_or_else(|| default_split(index.samples.len()));
    let parts = split(index.ids(), n_train, n_val, n_test, cfg.train.seed).map_err(|e| match e {
        Error::InsufficientSamples { .. } => CliError::usage(e.to_string()),
        other => other.into(),
    })?;
    cfg.write_to(out)?;
    let ids = SplitIds {
        train: parts.train,
        val: parts.val,
        test: parts.test,
    };
    write_json(&out.join(SPLIT_FILE), &ids)?;

    // Test images are never opened here.
    let train_samples = index.load_samples(data_dir, &ids.train)?;
    let val_samples = index.load_samples(data_dir, &ids.val)?;
    check_size(&train_samples, cfg.input_size)?;
    check_size(&val_samples, cfg.input_size)?;
    let train_set: Vec<Example> = train_samples.iter().map(Sample::to_example).collect();
    let val_set: Vec<Example> = val_samples.iter().map(Sample::to_example).collect();

    let mut model = Model::new(spec, cfg.train.seed)?;
    log::info!(
        "training {} ({} parameters) on {} images, validating on {}",
        cfg.variant.as_str(),
        model.num_params(),
        train_set.len(),
        val_set.len()
    );
    let mut log = csv_writer(&out.join(LOG_FILE))?;
    let mut log_err: Option<anyhow::Error> = None;
    let outcome = train(&mut model, &train_set, &val_set, &cfg.train, |r: &EpochRecord| {
        if log_err.is_none() {
            if let Err(e) = log.serialize(r).and_then(|()| log.flush().map_err(csv::Error::from)) {
                log_err = Some(e.into());
            }
        }
    });
    if let Some(e) = log_err {
        return Err(e.context("writing training log").into());
    }
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ Error::NonFiniteLoss { .. }) => {
            let path = out.join(LAST_GOOD_CHECKPOINT);
            checkpoint::save(&model, &path)?;
            return Err(anyhow!("{e}; weights of the last completed epoch saved to {}", path.display()).into());
        }
        Err(e) => return Err(e.into()),
    };
    checkpoint::save(&model, &out.join(LAST_CHECKPOINT))?;
    model.load_state(&outcome.best_state)?;
    checkpoint::save(&model, &out.join(BEST_CHECKPOINT))?;
    let best_train_dice = if train_set.is_empty() {
        0.0
    } else {
        dice_coefficient(&model, &train_set, cfg.train.threshold)?
    };
    let summary = TrainSummary {
        params: model.num_params(),
        epochs: cfg.train.epochs,
        best_epoch: outcome.best_epoch,
        final_train_loss: outcome.history.last().map(|r| r.train_loss),
        best_train_dice,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    log::info!("best epoch {:?}, training Dice {:.4}", summary.best_epoch, best_train_dice);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_covers_everything() {
        assert_eq!(default_split(64), [48, 8, 8]);
        assert_eq!(default_split(10), [7, 1, 2]);
        assert_eq!(default_split(0), [0, 0, 0]);
    }
}
