//! Waveform and pitch-contour encoders.
//!
//! Both share the same architecture family: a strided conv front end, a
//! layer norm, sinusoidal positional encoding, and a pre-norm transformer
//! trunk. The waveform front end downsamples by a total stride of 320
//! (20 ms hop at 16 kHz), each layer padded so its output length is
//! exactly `ceil(len/stride)`; a 160 000-sample segment therefore maps to
//! 500 frames. The pitch encoder consumes the standardized 1001-frame
//! contour through its own (default single, stride-2) conv layer so both
//! sequences are length-matched for the feature-axis concatenation later.
//! The pitch encoder is always freshly initialized, never pretrained.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::model::attention::{positional_encoding, Ctx, EncoderBlockP, LayerNormP};
use crate::numerics::{NodeId, ParamId, ParamStore, Real};
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerCfg {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub conv_layers: Vec<ConvLayerCfg>,
    pub transformer_layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn_width: usize,
    /// Pad each conv layer so its output length is `ceil(len/stride)`.
    pub same_length_padding: bool,
}

impl EncoderConfig {
    /// Waveform encoder: total stride 320, final width = d_model.
    pub fn default_deep() -> Self {
        EncoderConfig {
            conv_layers: vec![
                ConvLayerCfg { kernel: 10, stride: 5, channels: 16 },
                ConvLayerCfg { kernel: 8, stride: 4, channels: 32 },
                ConvLayerCfg { kernel: 8, stride: 4, channels: 64 },
                ConvLayerCfg { kernel: 8, stride: 4, channels: 64 },
            ],
            transformer_layers: 2,
            d_model: 64,
            heads: 4,
            ffn_width: 128,
            same_length_padding: true,
        }
    }

    /// Contour encoder: single stride-2 conv maps 1001 -> 500 frames.
    pub fn default_pitch() -> Self {
        EncoderConfig {
            conv_layers: vec![ConvLayerCfg { kernel: 3, stride: 2, channels: 64 }],
            transformer_layers: 1,
            d_model: 64,
            heads: 4,
            ffn_width: 128,
            same_length_padding: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_layers.is_empty() {
            return Err(SerError::Usage("encoder: no conv layers".into()));
        }
        if self.conv_layers.iter().any(|c| c.kernel == 0 || c.stride == 0 || c.channels == 0) {
            return Err(SerError::Usage("encoder: zero kernel/stride/channels".into()));
        }
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(SerError::Usage(format!(
                "encoder: d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.conv_layers.last().unwrap().channels != self.d_model {
            return Err(SerError::Usage(format!(
                "encoder: last conv channels {} must equal d_model {}",
                self.conv_layers.last().unwrap().channels,
                self.d_model
            )));
        }
        Ok(())
    }

    pub fn total_stride(&self) -> usize {
        self.conv_layers.iter().map(|c| c.stride).product()
    }

    /// Output frame count for an input of `len` samples (or frames).
    pub fn output_len(&self, len: usize) -> Result<usize> {
        let mut l = len;
        for c in &self.conv_layers {
            if self.same_length_padding {
                l = l.div_ceil(c.stride);
            } else {
                if c.kernel > l {
                    return Err(SerError::Usage(format!(
                        "encoder: kernel {} exceeds input length {l}",
                        c.kernel
                    )));
                }
                l = (l - c.kernel) / c.stride + 1;
            }
            if l == 0 {
                return Err(SerError::Usage("encoder: length collapsed to zero".into()));
            }
        }
        Ok(l)
    }

    /// Symmetric padding that realizes `ceil(len/stride)` outputs.
    fn padding_for(&self, len: usize, c: &ConvLayerCfg) -> (usize, usize) {
        if !self.same_length_padding {
            return (0, 0);
        }
        let out = len.div_ceil(c.stride);
        let needed = ((out - 1) * c.stride + c.kernel).saturating_sub(len);
        (needed / 2, needed - needed / 2)
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayerP {
    pub w: ParamId,
    pub b: ParamId,
    pub cfg: ConvLayerCfg,
}

/// Parameters of one encoder (conv front end + trunk).
#[derive(Debug, Clone)]
pub struct EncoderP {
    pub convs: Vec<ConvLayerP>,
    pub post_ln: LayerNormP,
    pub blocks: Vec<EncoderBlockP>,
    pub cfg: EncoderConfig,
}

impl EncoderP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        cfg: &EncoderConfig,
        in_channels: usize,
        seeds: &SeedStream,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut convs = Vec::new();
        let mut c_in = in_channels;
        for (i, layer) in cfg.conv_layers.iter().enumerate() {
            let w = params.add_uniform(
                &format!("{name}.conv{i}.w"),
                vec![layer.channels, layer.kernel, c_in],
                layer.kernel * c_in,
                seeds,
            );
            let b = params.add_zeros(&format!("{name}.conv{i}.b"), vec![layer.channels]);
            convs.push(ConvLayerP { w, b, cfg: *layer });
            c_in = layer.channels;
        }
        let post_ln = LayerNormP::build(params, &format!("{name}.post_ln"), cfg.d_model);
        let blocks = (0..cfg.transformer_layers)
            .map(|i| {
                EncoderBlockP::build(
                    params,
                    &format!("{name}.block{i}"),
                    cfg.d_model,
                    cfg.heads,
                    cfg.ffn_width,
                    seeds,
                )
            })
            .collect();
        Ok(EncoderP { convs, post_ln, blocks, cfg: cfg.clone() })
    }

    /// Encode a `[t, c_in]` leaf to `[t_out, d_model]`. Returns the output
    /// and the trunk attention probes.
    pub fn forward<R: Real>(
        &self,
        ctx: &mut Ctx<'_, R>,
        input: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let mut x = input;
        let mut len = ctx.tape.value(x).rows();
        for conv in &self.convs {
            let pad = self.cfg.padding_for(len, &conv.cfg);
            x = ctx
                .tape
                .conv1d(x, ctx.p(conv.w), ctx.p(conv.b), conv.cfg.stride, pad)?;
            x = ctx.tape.tanh(x);
            len = ctx.tape.value(x).rows();
        }
        x = ctx.layer_norm_affine(x, &self.post_ln)?;

        let pe = positional_encoding::<R>(len, self.cfg.d_model);
        let pe_leaf = ctx.tape.leaf(pe, false);
        x = ctx.tape.add(x, pe_leaf)?;

        let mut probes = Vec::new();
        for block in &self.blocks {
            let (out, mut p) = ctx.encoder_block(x, block)?;
            x = out;
            probes.append(&mut p);
        }
        Ok((x, probes))
    }
}

/// Build-time length matching between the waveform and contour encoders;
/// the feature-axis concatenation downstream needs equal sequence lengths.
pub fn check_length_match(
    deep: &EncoderConfig,
    pitch: &EncoderConfig,
    wave_len: usize,
    contour_len: usize,
) -> Result<usize> {
    let a = deep.output_len(wave_len)?;
    let b = pitch.output_len(contour_len)?;
    if a != b {
        return Err(SerError::Usage(format!(
            "encoder lengths diverge: waveform {wave_len} -> {a} frames, contour {contour_len} -> {b} frames"
        )));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    #[test]
    fn default_deep_encoder_maps_160k_samples_to_500_frames() {
        let cfg = EncoderConfig::default_deep();
        assert_eq!(cfg.total_stride(), 320);
        assert_eq!(cfg.output_len(160_000).unwrap(), 500);
    }

    #[test]
    fn default_pitch_encoder_maps_1001_frames_to_500() {
        let cfg = EncoderConfig::default_pitch();
        // 1 + floor((1001 - 3) / 2)
        assert_eq!(cfg.output_len(1001).unwrap(), 500);
        assert_eq!(
            check_length_match(
                &EncoderConfig::default_deep(),
                &cfg,
                160_000,
                1001
            )
            .unwrap(),
            500
        );
    }

    #[test]
    fn mismatched_lengths_are_a_config_error() {
        let deep = EncoderConfig::default_deep();
        let mut pitch = EncoderConfig::default_pitch();
        pitch.conv_layers[0].stride = 3;
        assert!(check_length_match(&deep, &pitch, 160_000, 1001).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = EncoderConfig::default_deep();
        cfg.d_model = 30; // not divisible by 4 heads
        assert!(cfg.validate().is_err());
        let mut cfg2 = EncoderConfig::default_deep();
        cfg2.conv_layers.last_mut().unwrap().channels = 32;
        assert!(cfg2.validate().is_err());
    }

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            conv_layers: vec![ConvLayerCfg { kernel: 4, stride: 2, channels: 8 }],
            transformer_layers: 1,
            d_model: 8,
            heads: 2,
            ffn_width: 16,
            same_length_padding: true,
        }
    }

    #[test]
    fn encoder_outputs_are_finite_and_deterministic() {
        let seeds = SeedStream::new(3);
        let mut params = ParamStore::<f64>::new();
        let enc = EncoderP::build(&mut params, "enc", &tiny_cfg(), 1, &seeds).unwrap();

        let run = |params: &ParamStore<f64>| -> Vec<f64> {
            let mut tape = Tape::new();
            let lease = params.lease(&mut tape);
            let x = tape.leaf(
                Tensor::new(vec![20, 1], (0..20).map(|i| (i as f64 * 0.4).sin()).collect())
                    .unwrap(),
                false,
            );
            let mut ctx = Ctx { tape: &mut tape, lease: &lease };
            let (y, _) = enc.forward(&mut ctx, x).unwrap();
            tape.value(y).data.clone()
        };
        let a = run(&params);
        let b = run(&params);
        assert_eq!(a, b, "inference must be deterministic");
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_zero_contour_stays_finite_under_layer_norm() {
        let seeds = SeedStream::new(4);
        let mut params = ParamStore::<f64>::new();
        let cfg = EncoderConfig {
            conv_layers: vec![ConvLayerCfg { kernel: 3, stride: 2, channels: 8 }],
            transformer_layers: 1,
            d_model: 8,
            heads: 2,
            ffn_width: 16,
            same_length_padding: false,
        };
        let enc = EncoderP::build(&mut params, "pe", &cfg, 1, &seeds).unwrap();
        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let x = tape.leaf(Tensor::new(vec![21, 1], vec![0.0; 21]).unwrap(), false);
        let mut ctx = Ctx { tape: &mut tape, lease: &lease };
        let (y, _) = enc.forward(&mut ctx, x).unwrap();
        assert!(tape.value(y).data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn different_seeds_give_different_untrained_outputs() {
        let mk = |seed: u64| -> Vec<f64> {
            let seeds = SeedStream::new(seed);
            let mut params = ParamStore::<f64>::new();
            let enc = EncoderP::build(&mut params, "pe", &tiny_cfg(), 1, &seeds).unwrap();
            let mut tape = Tape::new();
            let lease = params.lease(&mut tape);
            let x = tape.leaf(
                Tensor::new(vec![20, 1], (0..20).map(|i| i as f64 * 0.05).collect()).unwrap(),
                false,
            );
            let mut ctx = Ctx { tape: &mut tape, lease: &lease };
            let (y, _) = enc.forward(&mut ctx, x).unwrap();
            tape.value(y).data.clone()
        };
        assert_ne!(mk(1), mk(2));
    }
}
