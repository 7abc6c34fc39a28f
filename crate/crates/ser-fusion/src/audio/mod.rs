//! Audio ingest and length normalization.
//!
//! Every segment entering the pipeline goes through the same three steps:
//! decode (stereo downmixed by channel mean, integer PCM scaled to
//! [-1, 1]), band-limited resample to 16 kHz, and pad-or-truncate to
//! exactly 10 s (160 000 samples, tail zero-padding).

mod manifest;
mod resample;
mod wav;

pub use manifest::{read_manifest, write_manifest, ManifestRecord};
pub use resample::resample;
pub use wav::{load_wav, write_wav_16bit};

use crate::error::{Result, SerError};

/// Target rate after preprocessing.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;
/// Segment length after preprocessing (10 s at 16 kHz).
pub const TARGET_SAMPLES: usize = 160_000;

/// A mono waveform with provenance.
#[derive(Debug, Clone)]
pub struct AudioSegment {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub session_id: String,
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
    pub label: Option<String>,
}

impl AudioSegment {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(SerError::Data("sample rate must be positive".into()));
        }
        Ok(AudioSegment {
            samples,
            sample_rate,
            session_id: String::new(),
            start_s: None,
            end_s: None,
            label: None,
        })
    }

    pub fn with_meta(
        mut self,
        session_id: &str,
        start_s: Option<f64>,
        end_s: Option<f64>,
        label: Option<String>,
    ) -> Result<Self> {
        if let (Some(s), Some(e)) = (start_s, end_s) {
            if s >= e {
                return Err(SerError::Data(format!(
                    "segment times out of order: start {s} >= end {e}"
                )));
            }
        }
        self.session_id = session_id.to_string();
        self.start_s = start_s;
        self.end_s = end_s;
        self.label = label;
        Ok(self)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// True once the segment is 16 kHz / 160 000 samples.
    pub fn is_normalized(&self) -> bool {
        self.sample_rate == TARGET_SAMPLE_RATE && self.samples.len() == TARGET_SAMPLES
    }
}

/// Force a segment to exactly `target_s` seconds: short inputs are
/// zero-padded at the tail, long inputs truncated at the tail. Idempotent.
pub fn pad_or_truncate(a: &AudioSegment, target_s: f64) -> Result<AudioSegment> {
    if a.samples.is_empty() {
        return Err(SerError::Data("pad_or_truncate: empty input".into()));
    }
    let target = (target_s * a.sample_rate as f64).round() as usize;
    let mut out = a.clone();
    if out.samples.len() > target {
        out.samples.truncate(target);
    } else {
        out.samples.resize(target, 0.0);
    }
    Ok(out)
}

/// decode -> resample -> pad/truncate, producing a normalized segment.
pub fn preprocess(a: &AudioSegment) -> Result<AudioSegment> {
    let at_rate = if a.sample_rate == TARGET_SAMPLE_RATE {
        a.clone()
    } else {
        resample(a, TARGET_SAMPLE_RATE)?
    };
    pad_or_truncate(&at_rate, 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(n: usize, rate: u32) -> AudioSegment {
        AudioSegment::new(vec![0.25; n], rate).unwrap()
    }

    #[test]
    fn pad_or_truncate_hits_exact_length() {
        // 7.21 s at 16 kHz = 115 360 samples -> 44 640 trailing zeros.
        let short = seg(115_360, 16_000);
        let out = pad_or_truncate(&short, 10.0).unwrap();
        assert_eq!(out.samples.len(), 160_000);
        assert!(out.samples[115_360..].iter().all(|&v| v == 0.0));
        assert_eq!(out.samples[115_360..].len(), 44_640);

        let long = seg(12 * 16_000, 16_000);
        let out = pad_or_truncate(&long, 10.0).unwrap();
        assert_eq!(out.samples.len(), 160_000);

        let exact = seg(160_000, 16_000);
        let out = pad_or_truncate(&exact, 10.0).unwrap();
        assert_eq!(out.samples, exact.samples);
    }

    #[test]
    fn pad_or_truncate_is_idempotent() {
        let x = seg(50_000, 16_000);
        let once = pad_or_truncate(&x, 10.0).unwrap();
        let twice = pad_or_truncate(&once, 10.0).unwrap();
        assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn pad_or_truncate_rejects_empty() {
        let empty = AudioSegment::new(vec![], 16_000).unwrap();
        assert!(pad_or_truncate(&empty, 10.0).is_err());
    }

    #[test]
    fn metadata_ordering_is_validated() {
        assert!(seg(10, 16_000)
            .with_meta("s1", Some(5.0), Some(3.0), None)
            .is_err());
        assert!(seg(10, 16_000)
            .with_meta("s1", Some(3.0), Some(5.0), None)
            .is_ok());
    }
}
