//! Per-frame fundamental-frequency estimation.
//!
//! A YIN-style cumulative-mean-normalized difference function on the same
//! 25 ms / 10 ms centered frame grid as the MFCC front end. The squared
//! difference at each lag is divided by its overlap length before the
//! cumulative normalization, which keeps the statistic flat (about 1) for
//! aperiodic input even at lags close to the window length. A frame is
//! voiced when the normalized difference dips below 0.3 inside the 50-500 Hz
//! search band; the first qualifying dip wins and is refined by parabolic
//! interpolation. Unvoiced frames emit 0.

use crate::audio::{AudioSegment, TARGET_SAMPLES, TARGET_SAMPLE_RATE};
use crate::error::{Result, SerError};
use crate::features::{centered_frames, FeatureSequence, FeatureSource, FRAME_HOP, FRAME_LEN};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PitchParams {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Voicing threshold on the normalized difference function.
    pub threshold: f64,
}

impl Default for PitchParams {
    fn default() -> Self {
        PitchParams { fmin_hz: 50.0, fmax_hz: 500.0, threshold: 0.3 }
    }
}

/// Pitch contour (Hz, unvoiced = 0) of a normalized segment; 1001 x 1.
pub fn pitch_contour(a: &AudioSegment) -> Result<FeatureSequence> {
    pitch_contour_with(a, &PitchParams::default())
}

pub fn pitch_contour_with(a: &AudioSegment, p: &PitchParams) -> Result<FeatureSequence> {
    if a.sample_rate != TARGET_SAMPLE_RATE || a.samples.len() != TARGET_SAMPLES {
        return Err(SerError::Data(format!(
            "pitch_contour expects {TARGET_SAMPLE_RATE} Hz / {TARGET_SAMPLES} samples, got {} Hz / {}",
            a.sample_rate,
            a.samples.len()
        )));
    }
    let sr = TARGET_SAMPLE_RATE as f64;
    let tau_min = (sr / p.fmax_hz).floor() as usize;
    let tau_max = ((sr / p.fmin_hz).ceil() as usize).min(FRAME_LEN - FRAME_LEN / 5);
    if tau_min < 1 || tau_min >= tau_max {
        return Err(SerError::Usage(format!(
            "pitch search range {}-{} Hz is unusable at {sr} Hz",
            p.fmin_hz, p.fmax_hz
        )));
    }

    let x: Vec<f64> = a.samples.iter().map(|&v| v as f64).collect();
    let frames = centered_frames(&x, FRAME_LEN, FRAME_HOP);

    let mut contour = Vec::with_capacity(frames.len());
    for frame in &frames {
        contour.push(frame_pitch(frame, tau_min, tau_max, p.threshold, sr) as f32);
    }
    FeatureSequence::new(
        contour,
        frames.len(),
        1,
        FRAME_HOP as f64 / sr,
        FeatureSource::Pitch,
    )
}

fn frame_pitch(frame: &[f64], tau_min: usize, tau_max: usize, threshold: f64, sr: f64) -> f64 {
    let w = frame.len();
    // Length-normalized difference function.
    let mut diff = vec![0.0f64; tau_max + 1];
    for (tau, d) in diff.iter_mut().enumerate().skip(1) {
        let overlap = w - tau;
        let mut acc = 0.0;
        for i in 0..overlap {
            let e = frame[i] - frame[i + tau];
            acc += e * e;
        }
        *d = acc / overlap as f64;
    }

    // Cumulative mean normalization; silence degenerates to "aperiodic".
    let mut cmnd = vec![1.0f64; tau_max + 1];
    let mut running = 0.0f64;
    for tau in 1..=tau_max {
        running += diff[tau];
        cmnd[tau] = if running > 1e-14 {
            diff[tau] * tau as f64 / running
        } else {
            1.0
        };
    }

    // First dip under the threshold, walked to its local minimum.
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmnd[tau] < threshold {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            let refined = parabolic(&cmnd, tau, tau_min, tau_max);
            let f = sr / refined;
            return if f.is_finite() && f > 0.0 { f } else { 0.0 };
        }
        tau += 1;
    }
    0.0
}

/// Parabolic refinement of a discrete minimum.
fn parabolic(v: &[f64], tau: usize, lo: usize, hi: usize) -> f64 {
    if tau <= lo || tau >= hi {
        return tau as f64;
    }
    let (a, b, c) = (v[tau - 1], v[tau], v[tau + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-18 {
        return tau as f64;
    }
    let delta = 0.5 * (a - c) / denom;
    tau as f64 + delta.clamp(-1.0, 1.0)
}

/// Standardize the voiced part of a contour to zero mean / unit variance;
/// unvoiced frames stay 0. Applied between extraction and the encoder.
pub fn standardize_pitch(contour: &FeatureSequence) -> Result<FeatureSequence> {
    if contour.source != FeatureSource::Pitch || contour.d != 1 {
        return Err(SerError::Shape("standardize_pitch wants a raw pitch contour".into()));
    }
    let voiced: Vec<f64> = contour
        .frames
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v as f64)
        .collect();
    let mut out = contour.frames.clone();
    if !voiced.is_empty() {
        let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
        let var = voiced.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / voiced.len() as f64;
        let sd = var.sqrt().max(1e-6);
        for v in out.iter_mut() {
            if *v > 0.0 {
                *v = ((*v as f64 - mean) / sd) as f32;
            }
        }
    }
    FeatureSequence::new(out, contour.t, contour.d, contour.frame_hop_s, FeatureSource::Pitch)
}
