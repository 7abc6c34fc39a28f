//! MFCC-39 and pitch extraction on a synthetic tone.
//!
//! ```bash
//! cargo run --example extract_features
//! ```

use ser_fusion::features::{mfcc_39, pitch_contour, standardize_pitch};
use ser_fusion::synth::{gen_segment, CorpusSpec};

fn main() -> Result<(), ser_fusion::SerError> {
    let spec = CorpusSpec::default();
    let seg = gen_segment("negative", &spec, 0)?;
    println!(
        "segment: {} samples at {} Hz, label {:?}",
        seg.samples.len(),
        seg.sample_rate,
        seg.label
    );

    let mfcc = mfcc_39(&seg)?;
    println!("mfcc: {} frames x {} dims, hop {:.0} ms", mfcc.t, mfcc.d, mfcc.frame_hop_s * 1e3);
    let mid = mfcc.row(mfcc.t / 2);
    println!("  frame {}: c0..c3 = {:.2} {:.2} {:.2} {:.2}", mfcc.t / 2, mid[0], mid[1], mid[2], mid[3]);

    let pitch = pitch_contour(&seg)?;
    let voiced: Vec<f32> = pitch.frames.iter().copied().filter(|&v| v > 0.0).collect();
    let mean = voiced.iter().sum::<f32>() / voiced.len().max(1) as f32;
    println!(
        "pitch: {} frames, {} voiced, voiced mean {:.1} Hz (class f0 is 140 Hz)",
        pitch.t,
        voiced.len(),
        mean
    );

    let std = standardize_pitch(&pitch)?;
    let z: Vec<f32> = std.frames.iter().copied().filter(|&v| v != 0.0).collect();
    println!(
        "standardized contour: voiced min {:.2}, max {:.2}",
        z.iter().cloned().fold(f32::INFINITY, f32::min),
        z.iter().cloned().fold(f32::NEG_INFINITY, f32::max)
    );
    Ok(())
}
