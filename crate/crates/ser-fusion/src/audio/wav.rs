//! PCM WAV decode/encode.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::audio::AudioSegment;
use crate::error::{Result, SerError};

/// Load a PCM WAV file as a mono segment. Multi-channel audio is downmixed
/// by the channel mean; integer PCM is scaled by `1 / 2^(bits-1)` so full
/// scale lands in [-1, 1].
pub fn load_wav(path: &Path) -> Result<AudioSegment> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| SerError::Data(format!("wav {}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(SerError::Data(format!("wav {}: zero channels", path.display())));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits) if bits > 0 && bits <= 32 => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| SerError::Data(format!("wav {}: {e}", path.display())))?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SerError::Data(format!("wav {}: {e}", path.display())))?,
        (fmt, bits) => {
            return Err(SerError::Data(format!(
                "wav {}: unsupported codec {fmt:?}/{bits}-bit",
                path.display()
            )))
        }
    };

    if !interleaved.len().is_multiple_of(channels) {
        return Err(SerError::Data(format!(
            "wav {}: truncated frame data",
            path.display()
        )));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    AudioSegment::new(samples, spec.sample_rate)
}

/// Write a mono segment as 16-bit PCM, clamping to full scale.
pub fn write_wav_16bit(path: &Path, segment: &AudioSegment) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: segment.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &segment.samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_test_wav(path: &Path, data: &[i16], channels: u16, rate: u32) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &v in data {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn mono_16bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let mut data = vec![0i16; 16_000];
        data[0] = 32767;
        data[1] = -32768;
        write_test_wav(&path, &data, 1, 16_000);

        let seg = load_wav(&path).unwrap();
        assert_eq!(seg.samples.len(), 16_000);
        assert_eq!(seg.sample_rate, 16_000);
        // 32767/32768
        assert!((seg.samples[0] - 32767.0 / 32768.0).abs() < 1e-6);
        assert_eq!(seg.samples[1], -1.0);
        assert!(seg.samples.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn stereo_downmix_is_channel_mean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        // L=1000, R=3000 -> mean 2000
        write_test_wav(&path, &[1000, 3000, -1000, 1000], 2, 8_000);
        let seg = load_wav(&path).unwrap();
        assert_eq!(seg.samples.len(), 2);
        assert!((seg.samples[0] - 2000.0 / 32768.0).abs() < 1e-7);
        assert!(seg.samples[1].abs() < 1e-7);
    }

    #[test]
    fn truncated_file_is_an_ingest_error() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.wav");
        write_test_wav(&good, &vec![100i16; 1000], 1, 16_000);
        let bytes = std::fs::read(&good).unwrap();

        let bad = dir.path().join("bad.wav");
        std::fs::write(&bad, &bytes[..30]).unwrap();
        assert!(load_wav(&bad).is_err());

        let noise = dir.path().join("noise.wav");
        std::fs::write(&noise, b"RIFFgarbage").unwrap();
        assert!(load_wav(&noise).is_err());
    }

    #[test]
    fn synth_round_trip_stays_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let samples: Vec<f32> = (0..4000)
            .map(|i| 0.3 * (2.0 * std::f32::consts::PI * 220.0 * i as f32 / 16_000.0).sin())
            .collect();
        let seg = AudioSegment::new(samples.clone(), 16_000).unwrap();
        write_wav_16bit(&path, &seg).unwrap();
        let back = load_wav(&path).unwrap();
        let lsb = 1.0 / 32768.0;
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= lsb, "{a} vs {b}");
        }
    }
}
