//! Windowed-sinc resampling and length normalization on a WAV file.
//!
//! ```bash
//! cargo run --example resample_audio
//! ```

use ser_fusion::audio::{load_wav, pad_or_truncate, resample, write_wav_16bit, AudioSegment};

fn main() -> Result<(), ser_fusion::SerError> {
    // A 440 Hz tone at 44.1 kHz standing in for arbitrary input audio.
    let src_rate = 44_100;
    let samples: Vec<f32> = (0..2 * src_rate as usize)
        .map(|i| 0.5 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / src_rate as f32).sin())
        .collect();
    let seg = AudioSegment::new(samples, src_rate)?;
    let dir = std::env::temp_dir();
    let in_path = dir.join("ser-fusion-example-in.wav");
    write_wav_16bit(&in_path, &seg)?;

    let loaded = load_wav(&in_path)?;
    println!(
        "loaded {}: {} samples at {} Hz ({:.2} s)",
        in_path.display(),
        loaded.samples.len(),
        loaded.sample_rate,
        loaded.duration_s()
    );

    let at16k = resample(&loaded, 16_000)?;
    println!("resampled: {} samples at {} Hz", at16k.samples.len(), at16k.sample_rate);

    let normalized = pad_or_truncate(&at16k, 10.0)?;
    println!(
        "normalized: {} samples ({} trailing zeros)",
        normalized.samples.len(),
        normalized.samples.iter().rev().take_while(|&&v| v == 0.0).count()
    );

    let out_path = dir.join("ser-fusion-example-16k.wav");
    write_wav_16bit(&out_path, &normalized)?;
    println!("wrote {}", out_path.display());
    Ok(())
}
