//! Dataset assembly: manifests -> preprocessed, feature-extracted examples.

use std::path::Path;

use crate::audio::{load_wav, preprocess, ManifestRecord};
use crate::error::{Result, SerError};
use crate::model::{prepare_inputs, ModelConfig, SegmentInputs};

#[derive(Debug, Clone)]
pub struct TrainExample {
    pub inputs: SegmentInputs,
    pub label: usize,
    pub subject: String,
}

/// Map a label string to its class index.
pub fn class_index(classes: &[String], label: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| SerError::Data(format!("label {label} not in classes {classes:?}")))
}

/// Feature extraction is pure per segment, so records fan out over a small
/// thread pool; results are collected back in manifest order.
pub fn prepare_examples(
    records: &[ManifestRecord],
    base_dir: &Path,
    cfg: &ModelConfig,
    classes: &[String],
    threads: usize,
) -> Result<Vec<TrainExample>> {
    let threads = threads.max(1);
    let mut out: Vec<Option<TrainExample>> = (0..records.len()).map(|_| None).collect();
    let chunk = records.len().div_ceil(threads);
    if chunk == 0 {
        return Err(SerError::Data("prepare_examples: empty manifest".into()));
    }

    let results: Vec<Result<Vec<(usize, TrainExample)>>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (t, batch) in records.chunks(chunk).enumerate() {
            let base = t * chunk;
            handles.push(scope.spawn(move || {
                let mut local = Vec::with_capacity(batch.len());
                for (i, rec) in batch.iter().enumerate() {
                    local.push((base + i, example_from_record(rec, base_dir, cfg, classes)?));
                }
                Ok(local)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("extraction thread panicked"))
            .collect()
    });
    for res in results {
        for (idx, ex) in res? {
            out[idx] = Some(ex);
        }
    }
    Ok(out.into_iter().map(|e| e.expect("every slot filled")).collect())
}

fn example_from_record(
    rec: &ManifestRecord,
    base_dir: &Path,
    cfg: &ModelConfig,
    classes: &[String],
) -> Result<TrainExample> {
    let label_str = rec
        .label
        .as_deref()
        .ok_or_else(|| SerError::Data(format!("segment {} has no label", rec.path)))?;
    let label = class_index(classes, label_str)?;
    let raw = load_wav(&base_dir.join(&rec.path))?;
    let seg = preprocess(&raw)?;
    let inputs = prepare_inputs(&seg, cfg)?;
    Ok(TrainExample { inputs, label, subject: rec.session_id.clone() })
}

/// Load and prepare a whole manifest.
pub fn load_dataset(
    manifest_path: &Path,
    cfg: &ModelConfig,
    classes: &[String],
    threads: usize,
) -> Result<Vec<TrainExample>> {
    let records = crate::audio::read_manifest(manifest_path)?;
    if records.is_empty() {
        return Err(SerError::Data(format!(
            "manifest {} is empty",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    prepare_examples(&records, base, cfg, classes, threads)
}

/// Keep only examples whose subject is in the allow-list.
pub fn filter_by_subjects(examples: &[TrainExample], subjects: &[String]) -> Vec<TrainExample> {
    examples
        .iter()
        .filter(|e| subjects.contains(&e.subject))
        .cloned()
        .collect()
}
