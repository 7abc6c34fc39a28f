//! Segment manifests: JSON Lines, one record per segment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};

/// One segment of one session. Binary labels are the strings
/// `"negative"` / `"non_negative"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestRecord {
    pub path: String,
    pub session_id: String,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path)
        .map_err(|e| SerError::Data(format!("manifest {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
            SerError::Data(format!("manifest {}:{}: {e}", path.display(), lineno + 1))
        })?;
        if rec.start_s >= rec.end_s {
            return Err(SerError::Data(format!(
                "manifest {}:{}: start_s {} >= end_s {}",
                path.display(),
                lineno + 1,
                rec.start_s,
                rec.end_s
            )));
        }
        records.push(rec);
    }
    Ok(records)
}
