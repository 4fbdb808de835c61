//! Checkpoint layout: an 8-byte little-endian header length, a JSON header
//! naming every tensor with its shape and byte offset into the payload, then
//! the payload of little-endian `f64` values. The model spec is written as
//! JSON next to the checkpoint.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::Model;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::BatchNormStats;

const FORMAT: &str = "edgeattnet-f64le";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Parameter,
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<HeaderEntry>,
}

/// Where the spec for a checkpoint lives.
pub fn spec_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("spec.json")
}

pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, kind: EntryKind, data: &[f64], payload: &mut Vec<f64>| {
        entries.push(HeaderEntry {
            name,
            shape,
            offset: (payload.len() * 8) as u64,
            kind,
        });
        payload.extend_from_slice(data);
    };
    for p in model.params() {
        push(p.name().to_string(), p.shape().to_vec(), EntryKind::Parameter, p.data(), &mut payload);
    }
    for (name, stats) in model.batchnorm_stats() {
        let c = stats.mean.len();
        push(format!("{name}.running_mean"), vec![c], EntryKind::Buffer, &stats.mean, &mut payload);
        push(format!("{name}.running_var"), vec![c], EntryKind::Buffer, &stats.var, &mut payload);
    }
    let header = serde_json::to_vec(&Header {
        format: FORMAT.into(),
        version: VERSION,
        tensors: entries,
    })?;
    let mut out = Vec::with_capacity(8 + header.len() + payload.len() * 8);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 8 {
        return Err(Error::Checkpoint("file shorter than its length prefix".into()));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..len])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    Ok((header, &body[len..]))
}

/// Loads tensors from `bytes` into an already built `model`.
pub fn decode_into(model: &mut Model, bytes: &[u8]) -> Result<()> {
    let (header, payload) = decode_header(bytes)?;
    let read = |e: &HeaderEntry| -> Result<Vec<f64>> {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * 8;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!("{} runs past the payload", e.name)));
        }
        Ok(payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let find = |name: &str| {
        header
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    };
    let names: Vec<(String, Vec<usize>)> = model
        .params()
        .iter()
        .map(|p| (p.name().to_string(), p.shape().to_vec()))
        .collect();
    for (name, shape) in names {
        let e = find(&name)?;
        if e.shape != shape {
            return Err(Error::Checkpoint(format!(
                "{name}: stored shape {:?}, model expects {shape:?}",
                e.shape
            )));
        }
        let data = read(e)?;
        model.param_mut(&name)?.set_data(data)?;
    }
    for (name, current) in model.batchnorm_stats() {
        let mean = read(find(&format!("{name}.running_mean"))?)?;
        let var = read(find(&format!("{name}.running_var"))?)?;
        if mean.len() != current.mean.len() || var.len() != current.var.len() {
            return Err(Error::Checkpoint(format!("{name}: running stats have wrong length")));
        }
        model.set_batchnorm_stats(
            &name,
            BatchNormStats {
                mean,
                var,
                ..current
            },
        )?;
    }
    Ok(())
}

/// Writes the checkpoint and its spec.
pub fn save(model: &Model, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))?;
    let spec = serde_json::to_string_pretty(model.spec())?;
    let sp = spec_path(path);
    fs::write(&sp, spec).map_err(|e| Error::io(&sp, e))
}

pub fn load_spec(path: &Path) -> Result<ModelSpec> {
    let sp = spec_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let spec: ModelSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    Ok(spec)
}

/// Rebuilds the model described by the spec next to `path` and fills it.
pub fn load(path: &Path) -> Result<Model> {
    let spec = load_spec(path)?;
    let mut model = Model::new(spec, 0)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_into(&mut model, &bytes)?;
    Ok(model)
}
