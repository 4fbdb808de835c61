use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use edgeattnet::data::{load_annotations, record_instances, DatasetIndex};
use edgeattnet::io::read_mask_png;
use edgeattnet::metrics::{connected_components, evaluate_dataset, evaluate_image, ImageRecord, MaskSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::predict::MASK_DIR;
use super::train::SplitIds;
use super::{file_stem, list_images, write_json};
use crate::{CliError, RunConfig};

pub const REPORT_FILE: &str = "eval_report.json";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const MISMATCH_FILE: &str = "unmatched.json";

/// Ground truth keyed by image file stem, with the id used in reports.
struct Truth {
    id: String,
    instances: MaskSet,
}

/// Ids present on only one side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Unmatched {
    pub missing_predictions: Vec<String>,
    pub unknown_predictions: Vec<String>,
}

fn truth_from_dataset(dir: &Path, only: Option<&[String]>) -> anyhow::Result<BTreeMap<String, Truth>> {
    let index = DatasetIndex::load(dir)?;
    let mut out = BTreeMap::new();
    for e in &index.samples {
        if only.is_some_and(|ids| !ids.contains(&e.id)) {
            continue;
        }
        let instances = e
            .masks
            .iter()
            .map(|m| read_mask_png(&dir.join(m)))
            .collect::<edgeattnet::Result<MaskSet>>()?;
        out.insert(
            file_stem(&e.image),
            Truth {
                id: e.id.clone(),
                instances,
            },
        );
    }
    Ok(out)
}

fn truth_from_coco(path: &Path, only: Option<&[String]>) -> anyhow::Result<BTreeMap<String, Truth>> {
    let set = load_annotations(path)?;
    let mut warnings = set.warnings;
    let mut out = BTreeMap::new();
    for rec in &set.records {
        if only.is_some_and(|ids| !ids.contains(&rec.image_id)) {
            continue;
        }
        let instances = record_instances(rec, &mut warnings)?;
        if !instances.is_empty() {
            out.insert(
                file_stem(Path::new(&rec.file_name)),
                Truth {
                    id: rec.image_id.clone(),
                    instances,
                },
            );
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let pred_arg = cfg.require(&cfg.input, "input")?;
    let gt_path = cfg.require(&cfg.annotations, "annotations")?;
    let out = cfg.require(&cfg.output, "output")?;
    let pred_dir = if pred_arg.join(MASK_DIR).is_dir() {
        pred_arg.join(MASK_DIR)
    } else {
        pred_arg.to_path_buf()
    };
    let only = match &cfg.split_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let ids: SplitIds = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            Some(ids.test)
        }
        None => None,
    };
    let truth = if gt_path.is_dir() {
        truth_from_dataset(gt_path, only.as_deref())?
    } else {
        truth_from_coco(gt_path, only.as_deref())?
    };
    let predictions: BTreeMap<String, std::path::PathBuf> =
        list_images(&pred_dir)?.into_iter().map(|p| (file_stem(&p), p)).collect();

    let mut unmatched = Unmatched::default();
    let mut jobs = Vec::new();
    for (stem, t) in &truth {
        match predictions.get(stem) {
            Some(p) => jobs.push((t, p)),
            None => unmatched.missing_predictions.push(t.id.clone()),
        }
    }
    unmatched.unknown_predictions = predictions.keys().filter(|k| !truth.contains_key(*k)).cloned().collect();
    for id in &unmatched.missing_predictions {
        log::warn!("no prediction for ground-truth image {id}");
    }
    for stem in &unmatched.unknown_predictions {
        log::warn!("prediction {stem} has no ground truth");
    }
    if jobs.is_empty() {
        return Err(anyhow!("no prediction matches a ground-truth image").into());
    }

    let scales = &cfg.train.scales;
    let records: Vec<ImageRecord> = jobs
        .par_iter()
        .map(|(t, p)| -> anyhow::Result<ImageRecord> {
            let binary = read_mask_png(p)?;
            let pred = connected_components(&binary, cfg.train.min_area);
            Ok(evaluate_image(t.id.clone(), &t.instances, &pred, scales)?)
        })
        .collect::<anyhow::Result<_>>()?;
    cfg.write_to(out)?;
    write_json(&out.join(MISMATCH_FILE), &unmatched)?;
    let mut report = evaluate_dataset(records, scales)?;
    report.config_hash = Some(cfg.hash());
    std::fs::write(out.join(REPORT_FILE), report.to_json()?).context("writing report")?;
    std::fs::write(out.join(PAIRS_FILE), report.pairs_csv()?).context("writing pair scores")?;
    println!(
        "mIoU_pairwise {:.4}  mIoU_multiscale {:.4}  ({} images, {} without pairs)",
        report.miou_pairwise, report.miou_multiscale, report.images_evaluated, report.images_excluded
    );
    Ok(())
}
