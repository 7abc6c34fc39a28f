//! Signal-level feature extraction: 39-dim MFCC sequences and per-frame
//! pitch contours, both on a shared 25 ms / 10 ms centered frame grid.

mod dump;
mod mfcc;
mod pitch;

pub use dump::{read_feature_dump, write_feature_dump};
pub use mfcc::{mfcc_39, mfcc_39_with, MfccParams};
pub use pitch::{pitch_contour, pitch_contour_with, standardize_pitch, PitchParams};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};

/// Window length in samples at 16 kHz (25 ms).
pub const FRAME_LEN: usize = 400;
/// Hop length in samples at 16 kHz (10 ms).
pub const FRAME_HOP: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Mfcc,
    Pitch,
    Deep,
    PitchEncoded,
    MfccEncoded,
}

/// Time-major frame matrix with its hop and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// Row-major `t x d`.
    pub frames: Vec<f32>,
    pub t: usize,
    pub d: usize,
    pub frame_hop_s: f64,
    pub source: FeatureSource,
}

impl FeatureSequence {
    pub fn new(
        frames: Vec<f32>,
        t: usize,
        d: usize,
        frame_hop_s: f64,
        source: FeatureSource,
    ) -> Result<Self> {
        if t == 0 || d == 0 || frames.len() != t * d {
            return Err(SerError::Shape(format!(
                "feature sequence {t}x{d} vs {} values",
                frames.len()
            )));
        }
        match source {
            FeatureSource::Mfcc if d != 39 => {
                return Err(SerError::Shape(format!("mfcc features must be 39-dim, got {d}")))
            }
            FeatureSource::Pitch if d != 1 => {
                return Err(SerError::Shape(format!("pitch contour must be 1-dim, got {d}")))
            }
            _ => {}
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(SerError::Numerical("non-finite feature value".into()));
        }
        Ok(FeatureSequence { frames, t, d, frame_hop_s, source })
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.frames[t * self.d..(t + 1) * self.d]
    }
}

/// Split a reflection-padded signal into centered frames.
///
/// Frame `t` covers `[t*hop - win/2, t*hop + win/2)` of the original
/// signal; out-of-range samples are mirrored (without repeating the edge).
/// Frame count is `1 + floor(n / hop)`.
pub(crate) fn centered_frames(x: &[f64], win: usize, hop: usize) -> Vec<Vec<f64>> {
    let n = x.len() as isize;
    let t_count = 1 + x.len() / hop;
    let half = (win / 2) as isize;
    let mut frames = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let center = (t * hop) as isize;
        let mut frame = Vec::with_capacity(win);
        for k in 0..win as isize {
            let mut j = center - half + k;
            loop {
                if j < 0 {
                    j = -j;
                } else if j >= n {
                    j = 2 * (n - 1) - j;
                } else {
                    break;
                }
            }
            frame.push(x[j as usize]);
        }
        frames.push(frame);
    }
    frames
}
