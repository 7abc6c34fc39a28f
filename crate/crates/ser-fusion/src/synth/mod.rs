//! Deterministic synthetic corpus generation.
//!
//! Segments are harmonic stacks with class-dependent fundamental
//! trajectory and spectral tilt, so pitch and spectral oracles know the
//! ground truth exactly. Sessions are probability timelines with a
//! controllable alternation rate per group, giving trend-analysis tests a
//! constructed separation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_manifest, write_wav_16bit, AudioSegment, ManifestRecord};
use crate::error::{Result, SerError};
use crate::seed::SeedStream;
use crate::trend::{write_timelines, SessionTimeline, TimelinePoint};

/// Acoustic parameters of one label class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub label: String,
    pub f0_mean_hz: f64,
    pub f0_slope_hz_per_s: f64,
    pub spectral_tilt_db_per_oct: f64,
    /// Relative f0 wobble (0 disables).
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    pub segments_per_subject: usize,
    pub classes: Vec<ClassParams>,
    /// Additive white-noise amplitude (0 disables).
    pub noise_level: f64,
    /// Random per-subject f0 offset amplitude in Hz.
    pub subject_f0_spread_hz: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_subjects: 20,
            segments_per_subject: 20,
            classes: vec![
                ClassParams {
                    label: "negative".into(),
                    f0_mean_hz: 140.0,
                    f0_slope_hz_per_s: -2.0,
                    spectral_tilt_db_per_oct: -9.0,
                    jitter: 0.01,
                },
                ClassParams {
                    label: "non_negative".into(),
                    f0_mean_hz: 220.0,
                    f0_slope_hz_per_s: 0.0,
                    spectral_tilt_db_per_oct: -6.0,
                    jitter: 0.005,
                },
            ],
            noise_level: 0.01,
            subject_f0_spread_hz: 8.0,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.segments_per_subject == 0 {
            return Err(SerError::Usage("corpus spec: empty corpus".into()));
        }
        if self.classes.len() < 2 {
            return Err(SerError::Usage("corpus spec: need at least two classes".into()));
        }
        for pair in self.classes.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let same = (a.f0_mean_hz - b.f0_mean_hz).abs() < 1e-9
                && (a.f0_slope_hz_per_s - b.f0_slope_hz_per_s).abs() < 1e-9
                && (a.spectral_tilt_db_per_oct - b.spectral_tilt_db_per_oct).abs() < 1e-9
                && (a.jitter - b.jitter).abs() < 1e-9;
            if same {
                return Err(SerError::Usage(format!(
                    "corpus spec: classes {} and {} are indistinguishable",
                    a.label, b.label
                )));
            }
        }
        Ok(())
    }

    fn class(&self, label: &str) -> Result<&ClassParams> {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| SerError::Usage(format!("unknown label {label}")))
    }
}

const SEG_RATE: u32 = 16_000;
const SEG_SAMPLES: usize = 160_000;

/// One 10 s harmonic segment for `label`, deterministic in `(spec, seed)`.
pub fn gen_segment(label: &str, spec: &CorpusSpec, seed: u64) -> Result<AudioSegment> {
    gen_segment_offset(label, spec, seed, 0.0)
}

fn gen_segment_offset(
    label: &str,
    spec: &CorpusSpec,
    seed: u64,
    f0_offset_hz: f64,
) -> Result<AudioSegment> {
    let class = spec.class(label)?;
    let mut rng = SeedStream::new(spec.seed)
        .derive("segment")
        .derive_idx(seed)
        .rng();

    let sr = SEG_RATE as f64;
    let dur = SEG_SAMPLES as f64 / sr;
    let f0_mean = class.f0_mean_hz + f0_offset_hz;

    // Slow jitter: random walk low-passed hard enough to stay in-band.
    let mut jitter_state = 0.0f64;
    // Harmonic count fixed by the highest instantaneous f0.
    let f0_max = f0_mean + class.f0_slope_hz_per_s.abs() * dur / 2.0;
    let n_harm = ((7000.0 / f0_max).floor() as usize).max(1);
    // Tilt in amplitude per octave.
    let tilt: Vec<f64> = (1..=n_harm)
        .map(|h| 10f64.powf(class.spectral_tilt_db_per_oct * (h as f64).log2() / 20.0))
        .collect();
    let amp_norm: f64 = 0.3 / tilt.iter().sum::<f64>().max(1.0);

    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(SEG_SAMPLES);
    for i in 0..SEG_SAMPLES {
        let t = i as f64 / sr;
        if class.jitter > 0.0 {
            jitter_state = 0.999 * jitter_state + 0.001 * rng.gen_range(-1.0..1.0);
        }
        let f0 = (f0_mean + class.f0_slope_hz_per_s * (t - dur / 2.0))
            * (1.0 + class.jitter * jitter_state * 50.0);
        phase += 2.0 * std::f64::consts::PI * f0 / sr;
        let mut v = 0.0;
        for (h, &a) in tilt.iter().enumerate() {
            v += a * ((h + 1) as f64 * phase).sin();
        }
        v *= amp_norm;
        if spec.noise_level > 0.0 {
            v += spec.noise_level * rng.gen_range(-1.0..1.0);
        }
        samples.push(v as f32);
    }
    AudioSegment::new(samples, SEG_RATE)?.with_meta("synthetic", None, None, Some(label.into()))
}

/// Everything `gen_corpus` wrote to disk.
#[derive(Debug)]
pub struct CorpusOutput {
    pub manifest_path: std::path::PathBuf,
    pub sessions_path: std::path::PathBuf,
    pub records: Vec<ManifestRecord>,
}

/// Write a subject-structured WAV corpus plus a manifest. Labels alternate
/// within each subject so that classes stay balanced under subject-level
/// splits. Also writes group-labeled synthetic session timelines for the
/// trend pipeline (see [`SessionSpec`]).
pub fn gen_corpus(spec: &CorpusSpec, sessions: &SessionSpec, out_dir: &Path) -> Result<CorpusOutput> {
    spec.validate()?;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;

    let subject_stream = SeedStream::new(spec.seed).derive("subject_offset");
    let mut records = Vec::new();
    let mut global_idx = 0u64;
    for s in 0..spec.n_subjects {
        let subject_id = format!("subj{s:03}");
        let mut srng = subject_stream.derive_idx(s as u64).rng();
        let offset = srng.gen_range(-spec.subject_f0_spread_hz..=spec.subject_f0_spread_hz);
        for k in 0..spec.segments_per_subject {
            let class = &spec.classes[k % spec.classes.len()];
            let seg = gen_segment_offset(&class.label, spec, global_idx, offset)?;
            let rel = format!("wav/{subject_id}_{k:03}.wav");
            write_wav_16bit(&out_dir.join(&rel), &seg)?;
            records.push(ManifestRecord {
                path: rel,
                session_id: subject_id.clone(),
                start_s: k as f64 * 10.0,
                end_s: (k + 1) as f64 * 10.0,
                label: Some(class.label.clone()),
            });
            global_idx += 1;
        }
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;

    let timelines = gen_sessions(sessions)?;
    let sessions_path = out_dir.join("sessions.jsonl");
    write_timelines(&sessions_path, &timelines)?;

    Ok(CorpusOutput { manifest_path, sessions_path, records })
}

/// Synthetic session timelines with a controllable emotion change rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub sessions_per_group: usize,
    pub segment_s: f64,
    pub session_s: f64,
    /// Probability that the emotional state flips between consecutive
    /// segments, per group: (suicide, non_suicide).
    pub alternation: (f64, f64),
    pub seed: u64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec {
            sessions_per_group: 20,
            segment_s: 10.0,
            session_s: 2700.0,
            alternation: (0.8, 0.1),
            seed: 42,
        }
    }
}

pub fn gen_sessions(spec: &SessionSpec) -> Result<Vec<SessionTimeline>> {
    if spec.sessions_per_group == 0 || spec.segment_s <= 0.0 || spec.session_s <= 0.0 {
        return Err(SerError::Usage("session spec: empty or degenerate".into()));
    }
    let stream = SeedStream::new(spec.seed).derive("sessions");
    let n_points = (spec.session_s / spec.segment_s).floor() as usize;
    let mut out = Vec::new();
    for (g, (group, flip_p)) in [
        ("suicide", spec.alternation.0),
        ("non_suicide", spec.alternation.1),
    ]
    .into_iter()
    .enumerate()
    {
        for s in 0..spec.sessions_per_group {
            let mut rng = stream.derive_idx((g * spec.sessions_per_group + s) as u64).rng();
            let mut state = rng.gen_bool(0.5);
            let mut points = Vec::with_capacity(n_points);
            for i in 0..n_points {
                if i > 0 && rng.gen_bool(flip_p) {
                    state = !state;
                }
                let base: f64 = if state { 0.9 } else { 0.1 };
                let p = (base + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
                points.push(TimelinePoint {
                    t_start_s: i as f64 * spec.segment_s,
                    t_end_s: (i + 1) as f64 * spec.segment_s,
                    prob_negative: p,
                });
            }
            out.push(SessionTimeline {
                session_id: format!("{group}_{s:03}"),
                group: Some(group.to_string()),
                points,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::pitch_contour;

    #[test]
    fn segments_are_deterministic_per_label_and_seed() {
        let spec = CorpusSpec::default();
        let a = gen_segment("negative", &spec, 5).unwrap();
        let b = gen_segment("negative", &spec, 5).unwrap();
        let c = gen_segment("negative", &spec, 6).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let spec = CorpusSpec::default();
        assert!(gen_segment("joyful", &spec, 0).is_err());
    }

    #[test]
    fn pitch_oracle_recovers_class_f0() {
        let spec = CorpusSpec::default();
        let seg = gen_segment("negative", &spec, 1).unwrap();
        let contour = pitch_contour(&seg).unwrap();
        let voiced: Vec<f64> = contour
            .frames
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v as f64)
            .collect();
        assert!(!voiced.is_empty());
        let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
        assert!(
            (mean - 140.0).abs() <= 10.0,
            "voiced mean {mean} too far from 140"
        );
    }

    #[test]
    fn zero_noise_zero_jitter_is_periodic_and_voiced() {
        let mut spec = CorpusSpec { noise_level: 0.0, ..CorpusSpec::default() };
        for c in spec.classes.iter_mut() {
            c.jitter = 0.0;
            c.f0_slope_hz_per_s = 0.0;
        }
        let seg = gen_segment("non_negative", &spec, 2).unwrap();

        // Exactly periodic: the 220 Hz fundamental at 16 kHz has an
        // exact period of 800/11 samples, so compare 11 cycles = 800
        // samples apart.
        let period = 800;
        for i in 40_000..40_400 {
            let d = (seg.samples[i] - seg.samples[i + period]).abs();
            assert!(d < 1e-5, "sample {i} differs by {d}");
        }

        let contour = pitch_contour(&seg).unwrap();
        let interior = &contour.frames[5..996];
        let voiced = interior.iter().filter(|&&v| v > 0.0).count();
        assert!(
            voiced as f64 > 0.95 * interior.len() as f64,
            "{voiced}/{} voiced",
            interior.len()
        );
    }

    #[test]
    fn corpus_counts_and_balance() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            n_subjects: 10,
            segments_per_subject: 20,
            ..CorpusSpec::default()
        };
        let out = gen_corpus(&spec, &SessionSpec::default(), dir.path()).unwrap();
        assert_eq!(out.records.len(), 200);
        let negatives = out
            .records
            .iter()
            .filter(|r| r.label.as_deref() == Some("negative"))
            .count();
        assert_eq!(negatives, 100);
        let subjects: std::collections::BTreeSet<_> =
            out.records.iter().map(|r| r.session_id.clone()).collect();
        assert_eq!(subjects.len(), 10);
        assert!(out.manifest_path.exists());
        assert!(out.sessions_path.exists());
    }

    #[test]
    fn session_alternation_orders_measured_ecr() {
        let spec = SessionSpec::default();
        let sessions = gen_sessions(&spec).unwrap();
        assert_eq!(sessions.len(), 40);
        let mean_ecr = |group: &str| {
            let vals: Vec<f64> = sessions
                .iter()
                .filter(|s| s.group.as_deref() == Some(group))
                .map(|s| {
                    let ps: Vec<f64> = s.points.iter().map(|p| p.prob_negative).collect();
                    ps.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
                        / (ps.len() - 1) as f64
                })
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let (hi, lo) = (mean_ecr("suicide"), mean_ecr("non_suicide"));
        assert!(hi > lo, "constructed ECR ordering violated: {hi} vs {lo}");
    }

    #[test]
    fn identical_classes_are_rejected() {
        let mut spec = CorpusSpec::default();
        spec.classes[1] = ClassParams { label: "non_negative".into(), ..spec.classes[0].clone() };
        let dup = ClassParams { label: "negative".into(), ..spec.classes[1].clone() };
        spec.classes[0] = dup;
        assert!(spec.validate().is_err());
    }
}
