use std::path::PathBuf;

use anyhow::anyhow;
use edgeattnet::io::{read_gray, write_gray_png};
use edgeattnet::preprocess::{run_pipeline, DiskGeometry};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, file_stem, list_images, write_json};
use crate::{CliError, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub geometry: Option<DiskGeometry>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub succeeded: usize,
    pub failed: usize,
    pub entries: Vec<ManifestEntry>,
}

/// Fails only when no image could be processed.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg.require(&cfg.input, "input")?;
    let output = cfg.require(&cfg.output, "output")?;
    let images = list_images(input)?;
    if images.is_empty() {
        return Err(anyhow!("no PNG or PGM images in {}", input.display()).into());
    }
    create_dir(output)?;
    cfg.write_to(output)?;
    let entries: Vec<ManifestEntry> = images
        .par_iter()
        .map(|path| {
            let out_path = output.join(format!("{}.png", file_stem(path)));
            let result = read_gray(path)
                .and_then(|img| run_pipeline(&img, &cfg.preprocess))
                .and_then(|res| write_gray_png(&out_path, &res.image).map(|()| res.geometry));
            match result {
                Ok(geometry) => ManifestEntry {
                    input: path.clone(),
                    output: Some(out_path),
                    geometry: Some(geometry),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{}: {e}", path.display());
                    ManifestEntry {
                        input: path.clone(),
                        output: None,
                        geometry: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    let manifest = Manifest {
        succeeded: entries.len() - failed,
        failed,
        entries,
    };
    write_json(&output.join(MANIFEST_FILE), &manifest)?;
    log::info!("preprocessed {} of {} images", manifest.succeeded, manifest.entries.len());
    if manifest.succeeded == 0 {
        return Err(anyhow!("all {} images failed", manifest.failed).into());
    }
    Ok(())
}
