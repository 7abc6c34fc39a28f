//! The three-feature fusion classifier.
//!
//! A waveform encoder and a pitch-contour encoder produce length-matched
//! sequences that are fused by bidirectional cross-attention (queries from
//! one stream, keys/values from the other, shared weights across the two
//! directions), concatenated on the feature axis and average-pooled. The
//! pooled wav+pitch vector and the BiLSTM-pooled MFCC vector are then
//! re-tokenized through per-part projections and mixed by one self-attention
//! block before the classifier head. Ablation switches reduce the graph:
//! `vanilla` pools and concatenates with no attention at all, `cross_only`
//! skips the self-attention step, `self_only` skips cross-attention, and
//! `both` is the full model. The feature set is independently selectable so
//! single-feature baselines use just their encoder plus the head.

pub mod attention;
pub mod classifier;
pub mod encoder;
pub mod lstm;

use serde::{Deserialize, Serialize};

use crate::audio::AudioSegment;
use crate::error::{Result, SerError};
use crate::features::{
    mfcc_39, pitch_contour, standardize_pitch, FeatureSequence, FeatureSource,
};
use crate::model::attention::{AttnBlockP, Ctx, LinearP};
use crate::model::classifier::{classify_logits, loss_node, ClassifierP};
use crate::model::encoder::{check_length_match, EncoderConfig, EncoderP};
use crate::model::lstm::{bilstm_avg, BiLstmP};
use crate::numerics::{NodeId, ParamStore, Real, Tape, Tensor};
use crate::seed::SeedStream;

pub use crate::model::classifier::{Mode, Prediction};
pub use crate::model::encoder::ConvLayerCfg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Pooled features concatenated, no attention anywhere in the fusion.
    Vanilla,
    /// Cross-attention between wav and pitch; flat concat afterwards.
    CrossOnly,
    /// Pooled features as tokens through self-attention; no cross-attention.
    SelfOnly,
    /// Full model.
    Both,
}

impl Ablation {
    pub const ALL: [Ablation; 4] =
        [Ablation::Vanilla, Ablation::CrossOnly, Ablation::SelfOnly, Ablation::Both];

    fn uses_cross(self) -> bool {
        matches!(self, Ablation::CrossOnly | Ablation::Both)
    }

    fn uses_self(self) -> bool {
        matches!(self, Ablation::SelfOnly | Ablation::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub deep: bool,
    pub pitch: bool,
    pub mfcc: bool,
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet { deep: true, pitch: true, mfcc: true };

    pub fn single(name: &str) -> Result<FeatureSet> {
        match name {
            "deep" => Ok(FeatureSet { deep: true, pitch: false, mfcc: false }),
            "pitch" => Ok(FeatureSet { deep: false, pitch: true, mfcc: false }),
            "mfcc" => Ok(FeatureSet { deep: false, pitch: false, mfcc: true }),
            _ => Err(SerError::Usage(format!("unknown feature {name}"))),
        }
    }

    fn is_empty(&self) -> bool {
        !(self.deep || self.pitch || self.mfcc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub d_model: usize,
    pub heads: usize,
    pub dropout: f64,
    pub n_classes: usize,
    pub ablation: Ablation,
    pub feature_set: FeatureSet,
    /// Residual + layer norm around the fusion attention blocks.
    pub attention_residual: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            d_model: 64,
            heads: 4,
            dropout: 0.3,
            n_classes: 2,
            ablation: Ablation::Both,
            feature_set: FeatureSet::ALL,
            attention_residual: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub deep: EncoderConfig,
    pub pitch: EncoderConfig,
    pub mfcc_hidden: usize,
    pub classifier_hidden: usize,
    pub fusion: FusionConfig,
    /// Nominal input sizes, used for the build-time length match.
    pub wave_len: usize,
    pub contour_len: usize,
    pub mfcc_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            deep: EncoderConfig::default_deep(),
            pitch: EncoderConfig::default_pitch(),
            mfcc_hidden: 32,
            classifier_hidden: 64,
            fusion: FusionConfig::default(),
            wave_len: 160_000,
            contour_len: 1001,
            mfcc_dim: 39,
        }
    }
}

impl ModelConfig {
    /// Small instance for finite-difference checks: d_model 8, one head,
    /// sequence length 6 after both encoders.
    pub fn tiny() -> Self {
        ModelConfig {
            deep: EncoderConfig {
                conv_layers: vec![ConvLayerCfg { kernel: 2, stride: 2, channels: 8 }],
                transformer_layers: 1,
                d_model: 8,
                heads: 1,
                ffn_width: 16,
                same_length_padding: true,
            },
            pitch: EncoderConfig {
                conv_layers: vec![ConvLayerCfg { kernel: 3, stride: 2, channels: 8 }],
                transformer_layers: 1,
                d_model: 8,
                heads: 1,
                ffn_width: 16,
                same_length_padding: false,
            },
            mfcc_hidden: 4,
            classifier_hidden: 8,
            fusion: FusionConfig {
                d_model: 8,
                heads: 1,
                dropout: 0.3,
                n_classes: 2,
                ablation: Ablation::Both,
                feature_set: FeatureSet::ALL,
                attention_residual: true,
            },
            wave_len: 12,
            contour_len: 13,
            mfcc_dim: 39,
        }
    }

    fn part_dims(&self) -> Vec<usize> {
        let fs = self.fusion.feature_set;
        let mut dims = Vec::new();
        if fs.deep && fs.pitch {
            dims.push(2 * self.deep.d_model);
        } else if fs.deep {
            dims.push(self.deep.d_model);
        } else if fs.pitch {
            dims.push(self.pitch.d_model);
        }
        if fs.mfcc {
            dims.push(2 * self.mfcc_hidden);
        }
        dims
    }

    /// Width of the classifier input under this ablation.
    pub fn classifier_in_dim(&self) -> usize {
        let dims = self.part_dims();
        if self.fusion.ablation.uses_self() {
            dims.len() * self.fusion.d_model
        } else {
            dims.iter().sum()
        }
    }
}

/// Extracted per-segment model inputs; MFCC and pitch are cacheable.
#[derive(Debug, Clone)]
pub struct SegmentInputs {
    pub wave: Vec<f32>,
    pub mfcc: Option<FeatureSequence>,
    pub pitch_std: Option<FeatureSequence>,
}

/// Run the signal-level extractors a model configuration needs.
pub fn prepare_inputs(seg: &AudioSegment, cfg: &ModelConfig) -> Result<SegmentInputs> {
    if !seg.is_normalized() {
        return Err(SerError::Data(
            "segment must be preprocessed to 16 kHz / 160000 samples".into(),
        ));
    }
    let fs = cfg.fusion.feature_set;
    let mfcc = if fs.mfcc { Some(mfcc_39(seg)?) } else { None };
    let pitch_std = if fs.pitch {
        Some(standardize_pitch(&pitch_contour(seg)?)?)
    } else {
        None
    };
    Ok(SegmentInputs { wave: seg.samples.clone(), mfcc, pitch_std })
}

/// Parameter layout of one built model.
#[derive(Debug, Clone)]
struct Layout {
    deep: Option<EncoderP>,
    pitch: Option<EncoderP>,
    mfcc: Option<BiLstmP>,
    cross: Option<AttnBlockP>,
    self_attn: Option<AttnBlockP>,
    part_projs: Vec<LinearP>,
    classifier: ClassifierP,
}

pub struct GraphOut {
    pub logits: NodeId,
    /// Softmax nodes from the fusion cross/self attention.
    pub fusion_probes: Vec<NodeId>,
    /// Softmax nodes from the encoder trunks.
    pub encoder_probes: Vec<NodeId>,
}

pub struct FusionModel<R> {
    pub cfg: ModelConfig,
    pub params: ParamStore<R>,
    layout: Layout,
}

impl<R: Real> FusionModel<R> {
    pub fn new(cfg: ModelConfig, root_seed: u64) -> Result<Self> {
        if cfg.fusion.feature_set.is_empty() {
            return Err(SerError::Usage("feature set must not be empty".into()));
        }
        if cfg.fusion.n_classes < 1 {
            return Err(SerError::Usage("n_classes must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&cfg.fusion.dropout) {
            return Err(SerError::Usage(format!(
                "dropout {} outside [0,1)",
                cfg.fusion.dropout
            )));
        }
        let fs = cfg.fusion.feature_set;
        if fs.deep && fs.pitch {
            if cfg.deep.d_model != cfg.pitch.d_model {
                return Err(SerError::Usage(format!(
                    "encoder widths differ: deep {} vs pitch {}",
                    cfg.deep.d_model, cfg.pitch.d_model
                )));
            }
            check_length_match(&cfg.deep, &cfg.pitch, cfg.wave_len, cfg.contour_len)?;
        }

        let seeds = SeedStream::new(root_seed).derive("init");
        let mut params = ParamStore::new();

        let deep = if fs.deep {
            Some(EncoderP::build(&mut params, "deep", &cfg.deep, 1, &seeds)?)
        } else {
            None
        };
        let pitch = if fs.pitch {
            Some(EncoderP::build(&mut params, "pitch_enc", &cfg.pitch, 1, &seeds)?)
        } else {
            None
        };
        let mfcc = if fs.mfcc {
            Some(BiLstmP::build(&mut params, "mfcc.lstm", cfg.mfcc_dim, cfg.mfcc_hidden, &seeds))
        } else {
            None
        };

        // Fusion attention parameters exist whenever their inputs exist so
        // ablations only change graph reachability, not the param layout.
        let cross = if fs.deep && fs.pitch {
            Some(AttnBlockP::build(
                &mut params,
                "fusion.cross",
                cfg.deep.d_model,
                cfg.fusion.heads,
                &seeds,
            ))
        } else {
            None
        };
        let part_dims = cfg.part_dims();
        let self_attn = Some(AttnBlockP::build(
            &mut params,
            "fusion.self",
            cfg.fusion.d_model,
            cfg.fusion.heads,
            &seeds,
        ));
        let part_projs = part_dims
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                LinearP::build(
                    &mut params,
                    &format!("fusion.proj{i}"),
                    d,
                    cfg.fusion.d_model,
                    &seeds,
                )
            })
            .collect();

        let classifier = ClassifierP::build(
            &mut params,
            "cls",
            cfg.classifier_in_dim(),
            cfg.classifier_hidden,
            cfg.fusion.n_classes,
            cfg.fusion.dropout,
            &seeds,
        );

        Ok(FusionModel {
            cfg,
            params,
            layout: Layout { deep, pitch, mfcc, cross, self_attn, part_projs, classifier },
        })
    }

    /// Record the full forward graph for one segment on `tape`.
    pub fn build_graph(
        &self,
        tape: &mut Tape<R>,
        lease: &[NodeId],
        inputs: &SegmentInputs,
        mode: &Mode,
    ) -> Result<GraphOut> {
        let fs = self.cfg.fusion.feature_set;
        let ablation = self.cfg.fusion.ablation;
        let residual = self.cfg.fusion.attention_residual;
        let mut fusion_probes = Vec::new();
        let mut encoder_probes = Vec::new();
        let mut parts: Vec<NodeId> = Vec::new();

        let mut ctx = Ctx { tape, lease };

        // Sequence-level branch: deep and/or pitch.
        let f_w = match (&self.layout.deep, fs.deep) {
            (Some(enc), true) => {
                let wave = Tensor::new(
                    vec![inputs.wave.len(), 1],
                    inputs.wave.iter().map(|&v| R::from_f64(v as f64)).collect(),
                )
                .map_err(|_| SerError::Data("empty waveform".into()))?;
                let leaf = ctx.tape.leaf(wave, false);
                let (out, mut probes) = enc.forward(&mut ctx, leaf)?;
                encoder_probes.append(&mut probes);
                Some(out)
            }
            _ => None,
        };
        let f_p = match (&self.layout.pitch, fs.pitch) {
            (Some(enc), true) => {
                let contour = inputs.pitch_std.as_ref().ok_or_else(|| {
                    SerError::Data("model wants a pitch contour but none was prepared".into())
                })?;
                if contour.d != 1 {
                    return Err(SerError::Shape("pitch contour must be 1-dim".into()));
                }
                let t = ctx.tape.leaf(
                    Tensor::new(
                        vec![contour.t, 1],
                        contour.frames.iter().map(|&v| R::from_f64(v as f64)).collect(),
                    )?,
                    false,
                );
                let (out, mut probes) = enc.forward(&mut ctx, t)?;
                encoder_probes.append(&mut probes);
                Some(out)
            }
            _ => None,
        };

        match (f_w, f_p) {
            (Some(w), Some(p)) => {
                let wp_seq = if ablation.uses_cross() {
                    let cross = self.layout.cross.as_ref().expect("cross params built");
                    let (w2p, mut pr1) = ctx.attn_block(w, p, cross, residual)?;
                    let (p2w, mut pr2) = ctx.attn_block(p, w, cross, residual)?;
                    fusion_probes.append(&mut pr1);
                    fusion_probes.append(&mut pr2);
                    ctx.tape.concat_cols(&[w2p, p2w])?
                } else {
                    ctx.tape.concat_cols(&[w, p])?
                };
                parts.push(ctx.tape.mean_rows(wp_seq));
            }
            (Some(w), None) => parts.push(ctx.tape.mean_rows(w)),
            (None, Some(p)) => parts.push(ctx.tape.mean_rows(p)),
            (None, None) => {}
        }

        if let (Some(lstm), true) = (&self.layout.mfcc, fs.mfcc) {
            let mfcc = inputs.mfcc.as_ref().ok_or_else(|| {
                SerError::Data("model wants MFCC features but none were prepared".into())
            })?;
            if mfcc.d != self.cfg.mfcc_dim {
                return Err(SerError::Shape(format!(
                    "mfcc width {} vs configured {}",
                    mfcc.d, self.cfg.mfcc_dim
                )));
            }
            let standardized = standardize_columns::<R>(mfcc);
            let leaf = ctx.tape.leaf(Tensor::new(vec![mfcc.t, mfcc.d], standardized)?, false);
            parts.push(bilstm_avg(&mut ctx, leaf, lstm)?);
        }

        if parts.is_empty() {
            return Err(SerError::Usage("no features produced any part".into()));
        }

        // Assemble F and optionally let the parts attend to each other.
        let fused = if ablation.uses_self() {
            let self_attn = self.layout.self_attn.as_ref().expect("self params built");
            let mut tokens = Vec::with_capacity(parts.len());
            for (part, proj) in parts.iter().zip(&self.layout.part_projs) {
                tokens.push(ctx.linear(*part, proj)?);
            }
            let seq = ctx.tape.stack_rows(&tokens)?;
            let (mixed, mut pr) = ctx.attn_block(seq, seq, self_attn, residual)?;
            fusion_probes.append(&mut pr);
            let n = parts.len();
            ctx.tape.reshape(mixed, vec![1, n * self.cfg.fusion.d_model])?
        } else {
            ctx.tape.concat_cols(&parts)?
        };

        let logits = classify_logits(&mut ctx, fused, &self.layout.classifier, mode)?;
        Ok(GraphOut { logits, fusion_probes, encoder_probes })
    }

    /// The shared cross-attention block (both fusion directions).
    pub fn cross_attention_block(&self) -> Result<AttnBlockP> {
        self.layout
            .cross
            .ok_or_else(|| SerError::Usage("model has no cross-attention block".into()))
    }

    /// The fusion self-attention block.
    pub fn self_attention_block(&self) -> Result<AttnBlockP> {
        self.layout
            .self_attn
            .ok_or_else(|| SerError::Usage("model has no self-attention block".into()))
    }

    /// Inference on prepared inputs.
    pub fn predict_inputs(&self, inputs: &SegmentInputs) -> Result<Prediction> {
        let mut tape = Tape::new();
        let lease = self.params.lease(&mut tape);
        let out = self.build_graph(&mut tape, &lease, inputs, &Mode::Infer)?;
        let logits: Vec<f32> = tape.value(out.logits).data.iter().map(|v| v.to_f64() as f32).collect();
        Prediction::from_logits(logits, self.cfg.fusion.n_classes)
    }

    /// Full pipeline on a preprocessed segment: extract, encode, fuse,
    /// classify.
    pub fn predict(&self, seg: &AudioSegment) -> Result<Prediction> {
        let inputs = prepare_inputs(seg, &self.cfg)?;
        self.predict_inputs(&inputs)
    }

    /// One training example: forward, loss, backward. Returns the loss
    /// value and per-parameter gradients (None = unreachable).
    pub fn loss_and_grads(
        &self,
        inputs: &SegmentInputs,
        label: usize,
        example_seed: u64,
    ) -> Result<(f64, Vec<Option<Vec<R>>>)> {
        self.loss_and_grads_with_mode(inputs, label, &Mode::train_from(example_seed))
    }

    pub fn loss_and_grads_with_mode(
        &self,
        inputs: &SegmentInputs,
        label: usize,
        mode: &Mode,
    ) -> Result<(f64, Vec<Option<Vec<R>>>)> {
        let mut tape = Tape::new();
        let lease = self.params.lease(&mut tape);
        let out = self.build_graph(&mut tape, &lease, inputs, mode)?;
        let loss = loss_node(&mut tape, out.logits, label, self.cfg.fusion.n_classes)?;
        let loss_v = tape.value(loss).data[0].to_f64();
        tape.backward(loss)?;
        let grads = self.params.grads(&tape, &lease);
        Ok((loss_v, grads))
    }

    /// Inference loss, used for validation curves.
    pub fn eval_loss(&self, inputs: &SegmentInputs, label: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let lease = self.params.lease(&mut tape);
        let out = self.build_graph(&mut tape, &lease, inputs, &Mode::Infer)?;
        let loss = loss_node(&mut tape, out.logits, label, self.cfg.fusion.n_classes)?;
        Ok(tape.value(loss).data[0].to_f64())
    }
}

impl FusionModel<f32> {
    /// Rebuild a model from a checkpoint written by the trainer.
    pub fn from_checkpoint(path: &std::path::Path) -> Result<Self> {
        let (manifest, store) = crate::numerics::load_checkpoint(path)?;
        let cfg: ModelConfig = serde_json::from_value(manifest.config.clone())
            .map_err(|e| SerError::Data(format!("checkpoint config: {e}")))?;
        let mut model = FusionModel::<f32>::new(cfg, 0)?;
        model.params.copy_from(&store).map_err(|_| {
            SerError::Data("checkpoint parameters do not match the stored config".into())
        })?;
        Ok(model)
    }
}

/// Per-column zero-mean/unit-variance normalization of a feature matrix
/// (cepstral mean-variance normalization when applied to MFCC).
fn standardize_columns<R: Real>(f: &FeatureSequence) -> Vec<R> {
    let (t, d) = (f.t, f.d);
    let mut mean = vec![0.0f64; d];
    for row in 0..t {
        for (m, &v) in mean.iter_mut().zip(f.row(row)) {
            *m += v as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= t as f64;
    }
    let mut var = vec![0.0f64; d];
    for row in 0..t {
        for (k, &v) in f.row(row).iter().enumerate() {
            let dv = v as f64 - mean[k];
            var[k] += dv * dv;
        }
    }
    let inv_sd: Vec<f64> = var
        .iter()
        .map(|&v| 1.0 / (v / t as f64).sqrt().max(1e-6))
        .collect();
    let mut out = Vec::with_capacity(t * d);
    for row in 0..t {
        for (k, &v) in f.row(row).iter().enumerate() {
            out.push(R::from_f64((v as f64 - mean[k]) * inv_sd[k]));
        }
    }
    out
}

/// Synthetic tiny inputs matching [`ModelConfig::tiny`], for tests.
pub fn tiny_inputs(seed: u64) -> SegmentInputs {
    use rand::Rng;
    let mut rng = SeedStream::new(seed).derive("tiny").rng();
    let wave: Vec<f32> = (0..12).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mfcc = FeatureSequence::new(
        (0..4 * 39).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        4,
        39,
        0.01,
        FeatureSource::Mfcc,
    )
    .expect("tiny mfcc");
    let pitch = FeatureSequence::new(
        (0..13).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        13,
        1,
        0.01,
        FeatureSource::Pitch,
    )
    .expect("tiny pitch");
    SegmentInputs { wave, mfcc: Some(mfcc), pitch_std: Some(pitch) }
}

#[cfg(test)]
mod tests;
