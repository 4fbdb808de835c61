use anyhow::anyhow;
use edgeattnet::io::{read_gray, write_mask_png, write_overlay_png};
use edgeattnet::metrics::InstanceMask;
use edgeattnet::model::checkpoint;
use edgeattnet::train::predict_probabilities;

use super::{create_dir, file_stem, list_images};
use crate::{CliError, RunConfig};

pub const MASK_DIR: &str = "masks";
pub const OVERLAY_DIR: &str = "overlays";

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let ckpt = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let input = cfg.require(&cfg.input, "input")?;
    let out = cfg.require(&cfg.output, "output")?;
    let model = checkpoint::load(ckpt)?;
    let spec = model.spec().clone();
    let paths = list_images(input)?;
    if paths.is_empty() {
        return Err(anyhow!("no PNG or PGM images in {}", input.display()).into());
    }
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = read_gray(p)?;
        if (img.height, img.width) != (spec.input_height, spec.input_width) {
            return Err(anyhow!(
                "{} is {}x{} but the checkpoint expects {}x{}",
                p.display(),
                img.width,
                img.height,
                spec.input_width,
                spec.input_height
            )
            .into());
        }
        images.push(img);
    }
    let mut provenance = cfg.clone();
    provenance.variant = spec.variant;
    provenance.input_size = spec.input_height;
    provenance.write_to(out)?;
    create_dir(&out.join(MASK_DIR))?;
    if cfg.overlay {
        create_dir(&out.join(OVERLAY_DIR))?;
    }
    let rows: Vec<&[f64]> = images.iter().map(|i| i.pixels.as_slice()).collect();
    let probs = predict_probabilities(&model, &rows, cfg.train.batch_size)?;
    for ((path, img), p) in paths.iter().zip(&images).zip(&probs) {
        let mask = InstanceMask::from_probabilities(img.width, img.height, p, cfg.train.threshold)?;
        let name = format!("{}.png", file_stem(path));
        write_mask_png(&out.join(MASK_DIR).join(&name), &mask)?;
        if cfg.overlay {
            write_overlay_png(&out.join(OVERLAY_DIR).join(&name), img, &mask)?;
        }
    }
    log::info!("wrote {} masks to {}", paths.len(), out.join(MASK_DIR).display());
    Ok(())
}
