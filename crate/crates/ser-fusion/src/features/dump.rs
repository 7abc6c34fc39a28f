//! Feature cache files: a small JSON header followed by the f32 LE matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::features::{FeatureSequence, FeatureSource};

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    schema_version: u32,
    shape: [usize; 2],
    frame_hop_s: f64,
    source: FeatureSource,
}

pub fn write_feature_dump(path: &Path, f: &FeatureSequence) -> Result<()> {
    let header = DumpHeader {
        schema_version: 1,
        shape: [f.t, f.d],
        frame_hop_s: f.frame_hop_s,
        source: f.source,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for &v in &f.frames {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_dump(path: &Path) -> Result<FeatureSequence> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)
        .map_err(|_| SerError::Data("feature dump: truncated header".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| SerError::Data("feature dump: truncated header".into()))?;
    let header: DumpHeader = serde_json::from_slice(&header_bytes)?;

    let numel = header.shape[0] * header.shape[1];
    let mut blob = vec![0u8; numel * 4];
    r.read_exact(&mut blob)
        .map_err(|_| SerError::Data("feature dump: truncated matrix".into()))?;
    let frames = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureSequence::new(
        frames,
        header.shape[0],
        header.shape[1],
        header.frame_hop_s,
        header.source,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = FeatureSequence::new(
            (0..39 * 3).map(|i| i as f32 * 0.5).collect(),
            3,
            39,
            0.01,
            FeatureSource::Mfcc,
        )
        .unwrap();
        write_feature_dump(&path, &f).unwrap();
        let back = read_feature_dump(&path).unwrap();
        assert_eq!(back, f);
    }
}
