//! Deterministic seed derivation.
//!
//! A single root seed fans out into independent named streams (parameter
//! init, epoch shuffling, dropout masks, corpus synthesis, resampling
//! statistics) so that a run is reproducible from `(config, root_seed)`
//! alone and reordering one consumer never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit hash; stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Root seed plus a label path, e.g. `SeedStream::new(42).derive("init").derive("deep.conv0")`.
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        SeedStream { state: fnv1a64(&root.to_le_bytes()) }
    }

    /// Child stream for a named consumer.
    pub fn derive(&self, label: &str) -> SeedStream {
        let mut bytes = Vec::with_capacity(8 + label.len());
        bytes.extend_from_slice(&self.state.to_le_bytes());
        bytes.extend_from_slice(label.as_bytes());
        SeedStream { state: fnv1a64(&bytes) }
    }

    /// Child stream for an indexed consumer (epoch, segment, batch item).
    pub fn derive_idx(&self, idx: u64) -> SeedStream {
        let mut bytes = [0u8; 16];
        bytes[..8].copy_from_slice(&self.state.to_le_bytes());
        bytes[8..].copy_from_slice(&idx.to_le_bytes());
        SeedStream { state: fnv1a64(&bytes) }
    }

    pub fn seed(&self) -> u64 {
        self.state
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}
