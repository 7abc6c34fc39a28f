//! Band-limited sample-rate conversion (windowed sinc).

use crate::audio::AudioSegment;
use crate::error::{Result, SerError};

/// Zero crossings of the sinc on each side of the kernel center.
const SINC_ZEROS: f64 = 16.0;

/// Resample to `target_hz` with a Blackman-windowed sinc interpolator.
/// Duration is preserved to within one output sample; the kernel cutoff
/// tracks the lower of the two Nyquist frequencies, so downsampling is
/// anti-aliased. Out-of-range taps read the signal reflected at its ends.
pub fn resample(a: &AudioSegment, target_hz: u32) -> Result<AudioSegment> {
    if target_hz == 0 {
        return Err(SerError::Data("resample: target rate must be positive".into()));
    }
    if a.sample_rate == target_hz {
        return Ok(a.clone());
    }
    if a.samples.is_empty() {
        let mut out = a.clone();
        out.sample_rate = target_hz;
        return Ok(out);
    }

    let src = a.sample_rate as u64;
    let dst = target_hz as u64;
    let n_in = a.samples.len();
    let n_out = ((n_in as u64 * dst + src / 2) / src) as usize;

    // Cutoff in cycles per *source* sample.
    let ratio = dst as f64 / src as f64;
    let fc = 0.5 * ratio.min(1.0);
    let half_width = SINC_ZEROS / (2.0 * fc);

    let x = &a.samples;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let center = i as f64 / ratio;
        let j_lo = (center - half_width).floor() as isize;
        let j_hi = (center + half_width).ceil() as isize;
        let mut acc = 0.0f64;
        let mut norm = 0.0f64;
        for j in j_lo..=j_hi {
            let t = center - j as f64;
            let u = t / half_width;
            if u.abs() > 1.0 {
                continue;
            }
            let w = 0.42 + 0.5 * (std::f64::consts::PI * u).cos()
                + 0.08 * (2.0 * std::f64::consts::PI * u).cos();
            let s = 2.0 * fc * sinc(2.0 * fc * t) * w;
            acc += s * x[reflect(j, n_in)] as f64;
            norm += s;
        }
        out.push(if norm.abs() > 1e-12 { (acc / norm) as f32 } else { 0.0 });
    }

    let mut seg = a.clone();
    seg.samples = out;
    seg.sample_rate = target_hz;
    Ok(seg)
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        1.0
    } else {
        let pt = std::f64::consts::PI * t;
        pt.sin() / pt
    }
}

/// Mirror an index into [0, n) without repeating the edge sample.
fn reflect(j: isize, n: usize) -> usize {
    let n = n as isize;
    let mut j = j;
    loop {
        if j < 0 {
            j = -j;
        } else if j >= n {
            j = 2 * (n - 1) - j;
        } else {
            return j as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    fn sine(freq: f64, rate: u32, secs: f64) -> AudioSegment {
        let n = (rate as f64 * secs) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32)
            .collect();
        AudioSegment::new(samples, rate).unwrap()
    }

    /// Dominant frequency via FFT peak on the Hann-windowed signal.
    fn fft_peak_hz(samples: &[f32], rate: u32) -> f64 {
        let n = samples.len();
        let mut buf: Vec<Complex<f64>> = samples
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
                Complex::new(v as f64 * w, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let half = n / 2;
        let peak = (1..half)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        peak as f64 * rate as f64 / n as f64
    }

    #[test]
    fn identity_when_already_at_target_rate() {
        let s = sine(440.0, 16_000, 0.5);
        let out = resample(&s, 16_000).unwrap();
        assert_eq!(out.samples, s.samples);
    }

    #[test]
    fn upsample_preserves_dominant_frequency() {
        let s = sine(440.0, 8_000, 1.0);
        let out = resample(&s, 16_000).unwrap();
        assert_eq!(out.samples.len(), 16_000);
        let peak = fft_peak_hz(&out.samples, 16_000);
        assert!((peak - 440.0).abs() < 3.0, "peak at {peak} Hz");
    }

    #[test]
    fn downsample_duration_arithmetic() {
        let s = sine(1000.0, 44_100, 2.0);
        let out = resample(&s, 16_000).unwrap();
        assert_eq!(out.samples.len(), 32_000);
    }

    #[test]
    fn rejects_zero_rate() {
        let s = sine(440.0, 8_000, 0.1);
        assert!(resample(&s, 0).is_err());
    }

    #[test]
    fn round_trip_reconstructs_band_limited_sine_within_minus_40_db() {
        let s = sine(440.0, 8_000, 1.0);
        let up = resample(&s, 16_000).unwrap();
        let back = resample(&up, 8_000).unwrap();
        assert_eq!(back.samples.len(), s.samples.len());

        // Compare away from the ends (the kernel has no history there).
        let margin = 200;
        let mut err = 0.0f64;
        let mut sig = 0.0f64;
        for i in margin..s.samples.len() - margin {
            let d = (s.samples[i] - back.samples[i]) as f64;
            err += d * d;
            sig += (s.samples[i] as f64).powi(2);
        }
        let rel = (err / sig).sqrt();
        assert!(rel < 0.01, "relative error {rel} (-40 dB is 0.01)");
    }
}
