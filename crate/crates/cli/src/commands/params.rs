use std::path::Path;

use edgeattnet::model::{param_report, ModelSpec, ParamReport, VariantKind};

use super::{create_dir, write_json};
use crate::{CliError, RunConfig};

pub fn reports(variant: &str, input_size: Option<usize>, base_width: Option<usize>) -> Result<Vec<ParamReport>, CliError> {
    let variants: Vec<VariantKind> = if variant.eq_ignore_ascii_case("all") {
        VariantKind::ALL.to_vec()
    } else {
        vec![variant.parse().map_err(|e: edgeattnet::Error| CliError::usage(e.to_string()))?]
    };
    variants
        .into_iter()
        .map(|v| {
            let size = input_size.unwrap_or(256);
            let spec = match base_width {
                None => ModelSpec::reference(v).with_input_size(size, size),
                Some(b) => ModelSpec::scaled(v, b, size),
            };
            spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
            Ok(param_report(&spec))
        })
        .collect()
}

pub fn run(
    variant: &str,
    input_size: Option<usize>,
    base_width: Option<usize>,
    json: bool,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let reports = reports(variant, input_size, base_width)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&reports).map_err(anyhow::Error::from)?);
    } else {
        for r in &reports {
            println!("{}", r.render());
        }
        if let Some(unet) = reports.iter().find(|r| r.variant == VariantKind::Unet) {
            for r in reports.iter().filter(|r| r.variant != VariantKind::Unet) {
                println!("{} / unet = {:.4}", r.variant.as_str(), r.reduction_vs(unet));
            }
        }
    }
    if let Some(dir) = output {
        create_dir(dir)?;
        write_json(&dir.join("params.json"), &reports)?;
        let cfg = RunConfig {
            command: "params".into(),
            output: Some(dir.to_path_buf()),
            base_width,
            input_size: input_size.unwrap_or(256),
            ..RunConfig::default()
        };
        cfg.write_to(dir)?;
    }
    Ok(())
}
