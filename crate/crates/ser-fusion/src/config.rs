//! Run configuration: one TOML document carrying every tunable default,
//! hashed so each emitted report can name the exact configuration that
//! produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::features::{MfccParams, PitchParams};
use crate::model::ModelConfig;
use crate::seed::{fnv1a64, SeedStream};
use crate::synth::{CorpusSpec, SessionSpec};
use crate::train::{TrainConfig, ValScheme};
use crate::trend::GroupTest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub nss_threshold: f64,
    pub bootstrap_iters: usize,
    pub permutation_iters: usize,
    pub test: GroupTest,
    /// Moving-average window for the optional smoothed CSV column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_window: Option<usize>,
    pub seed: u64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            nss_threshold: 0.5,
            bootstrap_iters: 10_000,
            permutation_iters: 10_000,
            test: GroupTest::Permutation,
            smooth_window: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub scheme: ValScheme,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root seed; `with_root_seed` derives every subsystem seed from it.
    pub seed: u64,
    /// Class labels in index order; index 1 is the positive class of the
    /// binary task.
    pub classes: Vec<String>,
    pub model: ModelConfig,
    pub mfcc: MfccParams,
    pub pitch: PitchParams,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub trend: TrendConfig,
    pub synth: CorpusSpec,
    pub sessions: SessionSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: 1,
            seed: 0,
            classes: vec!["non_negative".into(), "negative".into()],
            model: ModelConfig::default(),
            mfcc: MfccParams::default(),
            pitch: PitchParams::default(),
            split: SplitConfig { scheme: ValScheme::Fraction(0.2), seed: 0 },
            train: TrainConfig::default(),
            trend: TrendConfig::default(),
            synth: CorpusSpec::default(),
            sessions: SessionSpec::default(),
        }
        .with_root_seed(42)
    }
}

impl RunConfig {
    /// Re-derive every subsystem seed from one root.
    pub fn with_root_seed(mut self, root: u64) -> Self {
        let s = SeedStream::new(root);
        self.seed = root;
        self.split.seed = s.derive("split").seed();
        self.train.seed = s.derive("train").seed();
        self.trend.seed = s.derive("trend").seed();
        self.synth.seed = s.derive("synth").seed();
        self.sessions.seed = s.derive("sessions").seed();
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| SerError::Usage(format!("config serialize: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| SerError::Usage(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SerError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(SerError::Usage("config: need at least two classes".into()));
        }
        if self.model.fusion.n_classes != self.classes.len() {
            return Err(SerError::Usage(format!(
                "config: model.fusion.n_classes {} != classes len {}",
                self.model.fusion.n_classes,
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON encoding, as a hex string.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:016x}", fnv1a64(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_preserves_config_and_hash() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn root_seed_changes_every_subsystem_seed() {
        let a = RunConfig::default().with_root_seed(1);
        let b = RunConfig::default().with_root_seed(2);
        assert_ne!(a.split.seed, b.split.seed);
        assert_ne!(a.train.seed, b.train.seed);
        assert_ne!(a.synth.seed, b.synth.seed);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn defaults_carry_the_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.epochs, 30);
        assert!((cfg.train.adam.lr - 3e-5).abs() < 1e-12);
        assert_eq!(cfg.model.fusion.dropout, 0.3);
        assert_eq!(cfg.model.fusion.d_model, 64);
        assert_eq!(cfg.model.deep.total_stride(), 320);
        assert_eq!(cfg.mfcc.n_coeffs, 13);
        assert_eq!(cfg.mfcc.n_mels, 40);
        assert_eq!(cfg.pitch.threshold, 0.3);
        assert_eq!(cfg.trend.nss_threshold, 0.5);
        assert_eq!(cfg.classes[1], "negative");
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.classes.push("angry".into());
        assert!(cfg.validate().is_err());
    }
}
