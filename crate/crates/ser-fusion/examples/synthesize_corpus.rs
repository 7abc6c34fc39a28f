//! Generate a small labeled corpus and session timelines.
//!
//! ```bash
//! cargo run --example synthesize_corpus
//! ```

use ser_fusion::synth::{gen_corpus, CorpusSpec, SessionSpec};

fn main() -> Result<(), ser_fusion::SerError> {
    let out_dir = std::env::temp_dir().join("ser-fusion-example-corpus");
    let spec = CorpusSpec {
        n_subjects: 4,
        segments_per_subject: 4,
        ..CorpusSpec::default()
    };
    let sessions = SessionSpec {
        sessions_per_group: 3,
        session_s: 1200.0,
        ..SessionSpec::default()
    };

    let out = gen_corpus(&spec, &sessions, &out_dir)?;
    println!("wrote {} segments under {}", out.records.len(), out_dir.display());
    println!("manifest: {}", out.manifest_path.display());
    println!("sessions: {}", out.sessions_path.display());

    for rec in out.records.iter().take(4) {
        println!(
            "  {} [{}..{}s] label={}",
            rec.path,
            rec.start_s,
            rec.end_s,
            rec.label.as_deref().unwrap_or("-")
        );
    }
    Ok(())
}
