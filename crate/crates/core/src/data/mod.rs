//! Annotation ingestion, sample construction, dataset splits, on-disk
//! dataset layout and a synthetic filament generator.

mod coco;
mod raster;
mod synth;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_gray, read_mask_png, write_gray_png, write_mask_png};
use crate::metrics::{InstanceMask, MaskSet};
use crate::preprocess::GrayImage;
use crate::train::Example;

pub use coco::{
    build_samples, load_annotations, parse_annotations, record_instances, Annotation, AnnotationRecord,
    AnnotationSet, BuildReport,
};
pub use raster::{polygon_area, rasterize_polygon};
pub use synth::{
    disk_background, filament_mask, generate_one, generate_synthetic, FilamentShape, SyntheticConfig, SyntheticSample,
};

/// An image with its ground-truth filament instances and their union.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub gt_instances: MaskSet,
    pub gt_union: InstanceMask,
}

impl Sample {
    /// Rejects samples without instances, with an empty instance, or whose
    /// masks do not match the image size.
    pub fn new(id: impl Into<String>, image: GrayImage, gt_instances: MaskSet) -> Result<Self> {
        let id = id.into();
        if gt_instances.is_empty() {
            return Err(Error::invalid(format!("sample {id} has no instances")));
        }
        if gt_instances.iter().any(InstanceMask::is_empty) {
            return Err(Error::invalid(format!("sample {id} has an empty instance")));
        }
        let gt_union = InstanceMask::union(&gt_instances, image.width, image.height)?;
        Ok(Self {
            id,
            image,
            gt_instances,
            gt_union,
        })
    }

    pub fn to_example(&self) -> Example {
        Example {
            id: self.id.clone(),
            image: self.image.pixels.clone(),
            target: self.gt_union.bits.iter().map(|&b| f64::from(u8::from(b))).collect(),
            instances: self.gt_instances.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then the first `n_train`, next `n_val` and next `n_test`
/// items. Leftover items are unused.
pub fn split<T>(items: Vec<T>, n_train: usize, n_val: usize, n_test: usize, seed: u64) -> Result<Split<T>> {
    let requested = n_train + n_val + n_test;
    if requested > items.len() {
        return Err(Error::InsufficientSamples {
            requested,
            available: items.len(),
        });
    }
    let mut items = items;
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = items.into_iter();
    let train = rest.by_ref().take(n_train).collect();
    let val = rest.by_ref().take(n_val).collect();
    let test = rest.take(n_test).collect();
    Ok(Split { train, val, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    /// Relative to the dataset directory.
    pub image: PathBuf,
    pub masks: Vec<PathBuf>,
}

/// `index.json` of a dataset directory holding `images/` and `masks/`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub samples: Vec<IndexEntry>,
}

pub const INDEX_FILE: &str = "index.json";

fn file_stem_for(i: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{i:05}_{clean}")
}

impl DatasetIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|e| e.id.clone()).collect()
    }

    /// Reads the listed samples only, in the order of `ids`.
    pub fn load_samples(&self, dir: &Path, ids: &[String]) -> Result<Vec<Sample>> {
        ids.iter()
            .map(|id| {
                let e = self
                    .samples
                    .iter()
                    .find(|e| &e.id == id)
                    .ok_or_else(|| Error::invalid(format!("sample {id} not in dataset index")))?;
                let image = read_gray(&dir.join(&e.image))?;
                let masks = e
                    .masks
                    .iter()
                    .map(|m| read_mask_png(&dir.join(m)))
                    .collect::<Result<MaskSet>>()?;
                Sample::new(e.id.clone(), image, masks)
            })
            .collect()
    }
}

/// Writes `samples` as 8-bit PNGs plus `index.json`.
pub fn save_dataset(dir: &Path, samples: &[Sample]) -> Result<DatasetIndex> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut index = DatasetIndex::default();
    for (i, s) in samples.iter().enumerate() {
        let stem = file_stem_for(i, &s.id);
        let image = PathBuf::from("images").join(format!("{stem}.png"));
        write_gray_png(&dir.join(&image), &s.image)?;
        let mut masks = Vec::with_capacity(s.gt_instances.len());
        for (k, m) in s.gt_instances.iter().enumerate() {
            let p = PathBuf::from("masks").join(format!("{stem}_{k}.png"));
            write_mask_png(&dir.join(&p), m)?;
            masks.push(p);
        }
        index.samples.push(IndexEntry {
            id: s.id.clone(),
            image,
            masks,
        });
    }
    let path = dir.join(INDEX_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let index = DatasetIndex::load(dir)?;
    index.load_samples(dir, &index.ids())
}
