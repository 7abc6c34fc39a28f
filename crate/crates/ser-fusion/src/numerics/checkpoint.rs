//! Checkpoint format: JSON manifest + little-endian f32 blob.
//!
//! ```text
//! magic "SERFCKPT" | u32 manifest_len | manifest JSON | f32 LE blob
//! ```
//!
//! The manifest records name, shape, and byte offset per parameter plus an
//! arbitrary config document; round-tripping is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SERFCKPT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ParamStore<f32>,
    config: serde_json::Value,
    config_hash: &str,
) -> Result<()> {
    let mut records = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (name, tensor) in params.iter() {
        records.push(ParamRecord {
            name: name.to_string(),
            shape: tensor.shape.clone(),
            offset,
        });
        offset += (tensor.numel() * 4) as u64;
    }
    let manifest = CheckpointManifest {
        schema_version: 1,
        config_hash: config_hash.to_string(),
        config,
        params: records,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(manifest_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for (_, tensor) in params.iter() {
        for &v in &tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointManifest, ParamStore<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| SerError::Data("checkpoint: truncated header".into()))?;
    if &magic != MAGIC {
        return Err(SerError::Data("checkpoint: bad magic".into()));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)
        .map_err(|_| SerError::Data("checkpoint: truncated manifest length".into()))?;
    let manifest_len = u32::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)
        .map_err(|_| SerError::Data("checkpoint: truncated manifest".into()))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&manifest_bytes)?;

    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;

    let mut store = ParamStore::new();
    for rec in &manifest.params {
        let numel: usize = rec.shape.iter().product();
        let start = rec.offset as usize;
        let end = start + numel * 4;
        if end > blob.len() {
            return Err(SerError::Data(format!(
                "checkpoint: blob too short for {} (need {end} bytes, have {})",
                rec.name,
                blob.len()
            )));
        }
        let data = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.add(&rec.name, Tensor::new(rec.shape.clone(), data)?);
    }
    Ok((manifest, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let mut params = ParamStore::<f32>::new();
        params.add(
            "a.w",
            Tensor::new(vec![2, 3], vec![1.0, -2.5, 3e-7, f32::MIN_POSITIVE, 0.0, -0.0]).unwrap(),
        );
        params.add("b", Tensor::new(vec![1], vec![42.0]).unwrap());

        save_checkpoint(&path, &params, serde_json::json!({"d": 4}), "abc123").unwrap();
        let (manifest, loaded) = load_checkpoint(&path).unwrap();

        assert_eq!(manifest.schema_version, 1);
        assert_eq!(manifest.config_hash, "abc123");
        assert_eq!(manifest.params.len(), 2);
        for ((n0, t0), (n1, t1)) in params.iter().zip(loaded.iter()) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape, t1.shape);
            // Bit-level comparison, not float comparison.
            let bits0: Vec<u32> = t0.data.iter().map(|v| v.to_bits()).collect();
            let bits1: Vec<u32> = t1.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits0, bits1);
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
