use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::raster::{polygon_area, rasterize_polygon};
use super::Sample;
use crate::error::{Error, Result};
use crate::io::read_gray;
use crate::metrics::InstanceMask;

/// One annotated filament: its polygons (flat `x, y` lists) are filled
/// together as a single instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub polygons: Vec<Vec<f64>>,
    /// Spine polyline, carried through untouched.
    pub spine: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    /// One entry per annotation, never merged across annotators.
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationSet {
    /// Every listed image in document order, annotated or not.
    pub records: Vec<AnnotationRecord>,
    pub warnings: Vec<String>,
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn flat_numbers(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

fn parse_polygons(seg: &Value) -> std::result::Result<Vec<Vec<f64>>, String> {
    let list = seg.as_array().ok_or("segmentation is not a polygon list")?;
    let mut out = Vec::with_capacity(list.len());
    for p in list {
        let flat = flat_numbers(p).ok_or("polygon is not a list of numbers")?;
        if flat.len() % 2 != 0 || flat.len() < 6 {
            return Err(format!("polygon has {} coordinates", flat.len()));
        }
        out.push(flat);
    }
    if out.is_empty() {
        return Err("segmentation has no polygons".into());
    }
    Ok(out)
}

/// Parses a COCO-style document with `images[]` and `annotations[]`.
/// Malformed annotations are skipped and described in `warnings`.
pub fn parse_annotations(doc: &str) -> Result<AnnotationSet> {
    let root: Value = serde_json::from_str(doc)?;
    let images = root
        .get("images")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("annotation document lacks an images array"))?;
    let annotations = root
        .get("annotations")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("annotation document lacks an annotations array"))?;
    let mut set = AnnotationSet::default();
    let mut by_id = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        let id = img.get("id").and_then(id_string);
        let file = img.get("file_name").and_then(Value::as_str);
        let w = img.get("width").and_then(Value::as_u64);
        let h = img.get("height").and_then(Value::as_u64);
        match (id, file, w, h) {
            (Some(id), Some(file), Some(w), Some(h)) if w > 0 && h > 0 => {
                if by_id.contains_key(&id) {
                    set.warnings.push(format!("image {id}: duplicate id ignored"));
                    continue;
                }
                by_id.insert(id.clone(), set.records.len());
                set.records.push(AnnotationRecord {
                    image_id: id,
                    file_name: file.to_string(),
                    width: w as usize,
                    height: h as usize,
                    annotations: Vec::new(),
                });
            }
            _ => set.warnings.push(format!("images[{i}]: missing id, file_name, width or height")),
        }
    }
    for (i, ann) in annotations.iter().enumerate() {
        let Some(image_id) = ann.get("image_id").and_then(id_string) else {
            set.warnings.push(format!("annotations[{i}]: missing image_id"));
            continue;
        };
        let Some(&slot) = by_id.get(&image_id) else {
            set.warnings.push(format!("annotations[{i}]: unknown image {image_id}"));
            continue;
        };
        match ann.get("segmentation").map(parse_polygons) {
            Some(Ok(polygons)) => set.records[slot].annotations.push(Annotation {
                polygons,
                spine: ann.get("spine").and_then(flat_numbers),
            }),
            Some(Err(why)) => set.warnings.push(format!("annotations[{i}] on image {image_id}: {why}")),
            None => set.warnings.push(format!("annotations[{i}] on image {image_id}: no segmentation")),
        }
    }
    Ok(set)
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let doc = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&doc)
}

/// Rasterizes every annotation of `record` into its own instance; polygons
/// of one annotation are OR-ed. Zero-area annotations are reported in
/// `warnings` and dropped.
pub fn record_instances(record: &AnnotationRecord, warnings: &mut Vec<String>) -> Result<Vec<InstanceMask>> {
    let (w, h) = (record.width, record.height);
    let mut out = Vec::with_capacity(record.annotations.len());
    for (k, ann) in record.annotations.iter().enumerate() {
        let mut inst = InstanceMask::empty(w, h);
        for poly in &ann.polygons {
            if polygon_area(poly) == 0.0 {
                warnings.push(format!("image {} annotation {k}: zero-area polygon", record.image_id));
                continue;
            }
            let m = rasterize_polygon(poly, w, h)?;
            inst.bits.iter_mut().zip(&m.bits).for_each(|(a, b)| *a |= *b);
        }
        if inst.is_empty() {
            warnings.push(format!("image {} annotation {k}: covers no pixel centre", record.image_id));
        } else {
            out.push(inst);
        }
    }
    Ok(out)
}

fn locate_image(dir: &Path, file_name: &str) -> Option<PathBuf> {
    let direct = dir.join(file_name);
    if direct.is_file() {
        return Some(direct);
    }
    let stem = Path::new(file_name).file_stem()?;
    let png = dir.join(stem).with_extension("png");
    png.is_file().then_some(png)
}

#[derive(Debug, Default)]
pub struct BuildReport {
    pub samples: Vec<Sample>,
    /// Images listed without any usable annotation.
    pub unannotated: usize,
    pub warnings: Vec<String>,
}

/// One sample per annotated image. Images are looked up in `image_dir` by
/// file name, falling back to the same stem with a `.png` extension (the
/// preprocessing output naming).
pub fn build_samples(records: &[AnnotationRecord], image_dir: &Path) -> BuildReport {
    let mut report = BuildReport::default();
    for rec in records {
        let instances = match record_instances(rec, &mut report.warnings) {
            Ok(v) => v,
            Err(e) => {
                report.warnings.push(format!("image {}: {e}", rec.image_id));
                continue;
            }
        };
        if instances.is_empty() {
            report.unannotated += 1;
            continue;
        }
        let Some(path) = locate_image(image_dir, &rec.file_name) else {
            report
                .warnings
                .push(format!("image {}: {} not found in {}", rec.image_id, rec.file_name, image_dir.display()));
            continue;
        };
        let image = match read_gray(&path) {
            Ok(img) if (img.width, img.height) == (rec.width, rec.height) => img,
            Ok(img) => {
                report.warnings.push(format!(
                    "image {}: file is {}x{}, annotations expect {}x{}",
                    rec.image_id, img.width, img.height, rec.width, rec.height
                ));
                continue;
            }
            Err(e) => {
                report.warnings.push(format!("image {}: {e}", rec.image_id));
                continue;
            }
        };
        match Sample::new(rec.image_id.clone(), image, instances) {
            Ok(s) => report.samples.push(s),
            Err(e) => report.warnings.push(format!("image {}: {e}", rec.image_id)),
        }
    }
    if report.samples.is_empty() {
        log::warn!("no samples built from {} annotated records", records.len());
    }
    report
}
