//! Session-level trend analytics: NSS and ECR per stage with bootstrap
//! confidence intervals and a permutation test between groups.
//!
//! ```bash
//! cargo run --example analyze_trends
//! ```

use ser_fusion::synth::{gen_sessions, SessionSpec};
use ser_fusion::trend::{build_report, ecr, nss, ReportOptions, Stage};

fn main() -> Result<(), ser_fusion::SerError> {
    // Two groups of synthetic sessions: one alternates emotional state at
    // 0.8 per segment, the other at 0.1.
    let spec = SessionSpec { sessions_per_group: 12, ..SessionSpec::default() };
    let timelines = gen_sessions(&spec)?;

    let one = &timelines[0];
    let (count, _) = nss(one, 0.5, Stage::Assessment);
    println!(
        "session {}: {} points, assessment NSS {}, assessment ECR {:.3}",
        one.session_id,
        one.points.len(),
        count,
        ecr(one, Stage::Assessment).unwrap()
    );

    let opts = ReportOptions { bootstrap_iters: 5000, permutation_iters: 5000, ..ReportOptions::default() };
    let report = build_report(&timelines, &opts)?;
    for row in &report.table {
        println!("{row}");
    }
    if let Some(p) = &report.p_values {
        for (stage, v) in p {
            println!(
                "{stage}: p_nss = {:.3}, p_ecr = {:.4}",
                v.nss,
                v.ecr.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
