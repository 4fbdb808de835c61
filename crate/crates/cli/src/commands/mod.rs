mod evaluate;
mod params;
mod predict;
mod preprocess;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::{CliError, Command, RunConfig};

pub(crate) fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Preprocess {
            input,
            output,
            overrides,
        } => {
            let mut cfg = RunConfig::resolve("preprocess", &overrides)?;
            cfg.input = input.or(cfg.input);
            cfg.output = output.or(cfg.output);
            preprocess::run(&cfg)
        }
        Command::Synth {
            output,
            count,
            preprocess,
            overrides,
        } => {
            let mut cfg = RunConfig::resolve("synth", &overrides)?;
            cfg.output = output.or(cfg.output);
            if let Some(n) = count {
                cfg.synthetic.count = n;
            }
            if let Some(s) = overrides.input_size {
                cfg.synthetic.width = s;
                cfg.synthetic.height = s;
            }
            cfg.preprocess_synthetic |= preprocess;
            synth::run(&cfg)
        }
        Command::Train {
            input,
            output,
            split,
            overrides,
        } => {
            let mut cfg = RunConfig::resolve("train", &overrides)?;
            cfg.input = input.or(cfg.input);
            cfg.output = output.or(cfg.output);
            cfg.split = split.or(cfg.split);
            train::run(&cfg)
        }
        Command::Predict {
            checkpoint,
            input,
            output,
            overlay,
            overrides,
        } => {
            let mut cfg = RunConfig::resolve("predict", &overrides)?;
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            cfg.input = input.or(cfg.input);
            cfg.output = output.or(cfg.output);
            cfg.overlay |= overlay;
            predict::run(&cfg)
        }
        Command::Evaluate {
            input,
            annotations,
            output,
            split_file,
            overrides,
        } => {
            let mut cfg = RunConfig::resolve("evaluate", &overrides)?;
            cfg.input = input.or(cfg.input);
            cfg.annotations = annotations.or(cfg.annotations);
            cfg.output = output.or(cfg.output);
            cfg.split_file = split_file.or(cfg.split_file);
            evaluate::run(&cfg)
        }
        Command::Params {
            variant,
            input_size,
            base_width,
            json,
            output,
        } => params::run(&variant, input_size, base_width, json, output.as_deref()),
    }
}

/// Image files (PNG, PGM/PNM) directly inside `dir`, sorted by name.
pub(crate) fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "pgm" | "pnm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub(crate) fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}
