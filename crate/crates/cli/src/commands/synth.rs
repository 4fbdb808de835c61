use anyhow::Context;
use edgeattnet::data::{generate_one, save_dataset, Sample};
use edgeattnet::preprocess::run_pipeline;
use rayon::prelude::*;

use crate::{CliError, RunConfig};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let output = cfg.require(&cfg.output, "output")?;
    cfg.synthetic
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let samples: Vec<Sample> = (0..cfg.synthetic.count)
        .into_par_iter()
        .map(|i| -> anyhow::Result<Sample> {
            let mut s = generate_one(&cfg.synthetic, i)?;
            if cfg.preprocess_synthetic {
                s.image = run_pipeline(&s.image, &cfg.preprocess)
                    .with_context(|| format!("preprocessing {}", s.id))?
                    .image;
            }
            Ok(s.into_sample()?)
        })
        .collect::<anyhow::Result<_>>()?;
    save_dataset(output, &samples)?;
    cfg.write_to(output)?;
    log::info!("wrote {} synthetic samples to {}", samples.len(), output.display());
    Ok(())
}
