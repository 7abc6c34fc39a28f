//! 39-dimensional MFCC extraction.
//!
//! Pipeline: pre-emphasis (0.97) -> 25 ms Hann window, 10 ms hop, centered
//! with reflection padding -> 512-point power spectrum -> 40-filter mel
//! bank (0-8000 Hz, HTK mel scale, unit-peak triangles) -> natural log
//! with floor 1e-10 -> orthonormal DCT-II keeping 13 coefficients ->
//! first/second derivatives from a 5-point regression window with edge
//! frames replicated. A 10 s / 16 kHz segment yields 1001 x 39.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{AudioSegment, TARGET_SAMPLES, TARGET_SAMPLE_RATE};
use crate::error::{Result, SerError};
use crate::features::{centered_frames, FeatureSequence, FeatureSource, FRAME_HOP, FRAME_LEN};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MfccParams {
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    /// Regression radius for the derivative windows (2 -> 5-point).
    pub delta_radius: usize,
}

impl Default for MfccParams {
    fn default() -> Self {
        MfccParams {
            n_fft: 512,
            n_mels: 40,
            n_coeffs: 13,
            pre_emphasis: 0.97,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            log_floor: 1e-10,
            delta_radius: 2,
        }
    }
}

/// MFCC-39 of a normalized (16 kHz, 10 s) segment.
pub fn mfcc_39(a: &AudioSegment) -> Result<FeatureSequence> {
    mfcc_39_with(a, &MfccParams::default())
}

pub fn mfcc_39_with(a: &AudioSegment, p: &MfccParams) -> Result<FeatureSequence> {
    if a.sample_rate != TARGET_SAMPLE_RATE || a.samples.len() != TARGET_SAMPLES {
        return Err(SerError::Data(format!(
            "mfcc_39 expects {TARGET_SAMPLE_RATE} Hz / {TARGET_SAMPLES} samples, got {} Hz / {}",
            a.sample_rate,
            a.samples.len()
        )));
    }

    // Pre-emphasis; y[0] = x[0].
    let mut emphasized = Vec::with_capacity(a.samples.len());
    let mut prev = 0.0f64;
    for &s in &a.samples {
        let x = s as f64;
        emphasized.push(x - p.pre_emphasis * prev);
        prev = x;
    }

    let frames = centered_frames(&emphasized, FRAME_LEN, FRAME_HOP);
    let t_count = frames.len();

    // Periodic Hann.
    let window: Vec<f64> = (0..FRAME_LEN)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / FRAME_LEN as f64).cos())
        .collect();

    let mel_bank = mel_filterbank(p, TARGET_SAMPLE_RATE as f64);
    let dct = dct_matrix(p.n_coeffs, p.n_mels);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(p.n_fft);
    let n_bins = p.n_fft / 2 + 1;
    let mut cepstra = vec![0.0f64; t_count * p.n_coeffs];
    let mut buf = vec![Complex::new(0.0, 0.0); p.n_fft];
    let mut power = vec![0.0f64; n_bins];
    let mut mels = vec![0.0f64; p.n_mels];

    for (t, frame) in frames.iter().enumerate() {
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < FRAME_LEN {
                Complex::new(frame[i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, pw) in power.iter_mut().enumerate() {
            *pw = buf[k].norm_sqr();
        }
        for (m, mel) in mels.iter_mut().enumerate() {
            let filt = &mel_bank[m];
            let mut e = 0.0;
            for &(k, w) in filt {
                e += w * power[k];
            }
            *mel = e.max(p.log_floor).ln();
        }
        for k in 0..p.n_coeffs {
            let row = &dct[k * p.n_mels..(k + 1) * p.n_mels];
            let mut c = 0.0;
            for (w, &m) in row.iter().zip(mels.iter()) {
                c += w * m;
            }
            cepstra[t * p.n_coeffs + k] = c;
        }
    }

    let deltas = regression_deltas(&cepstra, t_count, p.n_coeffs, p.delta_radius);
    let delta2 = regression_deltas(&deltas, t_count, p.n_coeffs, p.delta_radius);

    let d_out = 3 * p.n_coeffs;
    let mut out = vec![0.0f32; t_count * d_out];
    for t in 0..t_count {
        for k in 0..p.n_coeffs {
            out[t * d_out + k] = cepstra[t * p.n_coeffs + k] as f32;
            out[t * d_out + p.n_coeffs + k] = deltas[t * p.n_coeffs + k] as f32;
            out[t * d_out + 2 * p.n_coeffs + k] = delta2[t * p.n_coeffs + k] as f32;
        }
    }
    FeatureSequence::new(
        out,
        t_count,
        d_out,
        FRAME_HOP as f64 / TARGET_SAMPLE_RATE as f64,
        FeatureSource::Mfcc,
    )
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Unit-peak triangular filters as sparse (bin, weight) lists.
fn mel_filterbank(p: &MfccParams, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let n_bins = p.n_fft / 2 + 1;
    let mel_lo = hz_to_mel(p.fmin_hz);
    let mel_hi = hz_to_mel(p.fmax_hz);
    let edges: Vec<f64> = (0..p.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (p.n_mels + 1) as f64))
        .collect();

    let bin_hz = sample_rate / p.n_fft as f64;
    let mut bank = Vec::with_capacity(p.n_mels);
    for m in 0..p.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut filt = Vec::new();
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < center {
                (f - lo) / (center - lo)
            } else if (f - center).abs() < 1e-12 {
                1.0
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            if w > 0.0 {
                filt.push((k, w));
            }
        }
        bank.push(filt);
    }
    bank
}

/// Orthonormal DCT-II, `n_out x n_in` row-major.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    let norm0 = (1.0 / n_in as f64).sqrt();
    let norm = (2.0 / n_in as f64).sqrt();
    for k in 0..n_out {
        for n in 0..n_in {
            let c = (std::f64::consts::PI * k as f64 * (2 * n + 1) as f64
                / (2.0 * n_in as f64))
                .cos();
            m[k * n_in + n] = if k == 0 { norm0 * c } else { norm * c };
        }
    }
    m
}

/// Least-squares slope over `t-radius ..= t+radius` with edge replication:
/// `d_t = sum_n n*(c_{t+n} - c_{t-n}) / (2 * sum_n n^2)`.
fn regression_deltas(x: &[f64], t_count: usize, d: usize, radius: usize) -> Vec<f64> {
    let denom: f64 = 2.0 * (1..=radius).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = vec![0.0; x.len()];
    let clamp = |t: isize| -> usize { t.clamp(0, t_count as isize - 1) as usize };
    for t in 0..t_count {
        for k in 0..d {
            let mut num = 0.0;
            for n in 1..=radius {
                let fwd = x[clamp(t as isize + n as isize) * d + k];
                let bwd = x[clamp(t as isize - n as isize) * d + k];
                num += n as f64 * (fwd - bwd);
            }
            out[t * d + k] = num / denom;
        }
    }
    out
}
