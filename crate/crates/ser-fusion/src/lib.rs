//! Speech emotion recognition via attention-based feature fusion.
//!
//! This crate trains and evaluates a small speech-emotion classifier that
//! fuses three views of an utterance — a convolutional/transformer encoding
//! of the raw waveform, a pitch contour re-encoded by the same architecture
//! family, and a 39-dim MFCC sequence summarized by a bidirectional LSTM —
//! through bidirectional cross-attention and a final self-attention step.
//! On top of the classifier it provides session-level emotion-trend
//! analytics (negative-segment counts, emotion change rate, bootstrap
//! confidence intervals, permutation tests) for comparing caller groups.
//!
//! Everything runs on CPU from scratch: the crate ships its own tensor
//! engine with reverse-mode differentiation, its own DSP (windowed-sinc
//! resampling, MFCC, YIN-style pitch), and a synthetic corpus generator so
//! the full pipeline is exercisable without any external data.
//!
//! # Layout
//!
//! - [`numerics`] — tensors, the autodiff tape, layer kernels, Adam, and
//!   the checkpoint format
//! - [`audio`] — WAV ingest, resampling, length normalization, manifests
//! - [`features`] — MFCC-39 and pitch-contour extraction
//! - [`model`] — encoders, cross/self-attention fusion, classifier, losses
//! - [`train`] — subject-level splits, the training loop, metrics
//! - [`trend`] — NSS/ECR session analytics and group statistics
//! - [`synth`] — deterministic synthetic corpus and session generation
//! - [`config`] / [`cli`] — run configuration and the `ser` command-line
//!   entry points
//!
//! # Quick start
//!
//! ```
//! use ser_fusion::synth::{gen_segment, CorpusSpec};
//! use ser_fusion::features::{mfcc_39, pitch_contour};
//!
//! let spec = CorpusSpec::default();
//! let seg = gen_segment("negative", &spec, 7).unwrap();
//! let mfcc = mfcc_39(&seg).unwrap();
//! assert_eq!((mfcc.t, mfcc.d), (1001, 39));
//! let pitch = pitch_contour(&seg).unwrap();
//! assert_eq!((pitch.t, pitch.d), (1001, 1));
//! ```
//!
//! Runnable walkthroughs for every major capability live under `examples/`;
//! the thin `ser` binary exposes the same functionality as subcommands.

pub mod audio;
pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod model;
pub mod numerics;
pub mod seed;
pub mod synth;
pub mod train;
pub mod trend;

pub use error::SerError;
