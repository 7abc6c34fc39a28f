//! Session-level emotion-trend analytics.
//!
//! A scored session is an ordered list of segment probabilities; the two
//! metrics are NSS (count of segments whose negative-emotion probability
//! exceeds the threshold) and ECR (mean absolute difference between
//! consecutive probabilities). Both are evaluated on the assessment stage
//! (first 30 minutes) and on the full call, aggregated per group with
//! bootstrap confidence intervals and compared with a permutation test.

mod report;
mod stats;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};

pub use report::{
    build_report, write_session_csv, GroupStageStats, GroupTest, ReportOptions, StagePValues,
    TrendReport,
};
pub use stats::{bootstrap_ci, mann_whitney_u_pvalue, permutation_pvalue};

/// Assessment stage length: the first 30 minutes.
pub const ASSESSMENT_WINDOW_S: f64 = 1800.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TimelinePoint {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub prob_negative: f64,
}

/// One scored call.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionTimeline {
    pub session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub points: Vec<TimelinePoint>,
}

impl SessionTimeline {
    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].t_start_s < w[0].t_start_s {
                return Err(SerError::Data(format!(
                    "session {}: points out of order",
                    self.session_id
                )));
            }
            if w[1].t_start_s < w[0].t_end_s {
                return Err(SerError::Data(format!(
                    "session {}: overlapping points",
                    self.session_id
                )));
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.prob_negative) {
                return Err(SerError::Data(format!(
                    "session {}: probability {} outside [0,1]",
                    self.session_id, p.prob_negative
                )));
            }
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t_end_s)
    }
}

/// Analysis window within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// First 30 minutes of the call.
    Assessment,
    /// The entire call.
    Full,
}

impl Stage {
    /// Points whose segment starts inside the window.
    fn select<'a>(&self, timeline: &'a SessionTimeline) -> Vec<&'a TimelinePoint> {
        match self {
            Stage::Full => timeline.points.iter().collect(),
            Stage::Assessment => timeline
                .points
                .iter()
                .filter(|p| p.t_start_s < ASSESSMENT_WINDOW_S)
                .collect(),
        }
    }
}

/// Count of in-window segments with `prob_negative > threshold`. An empty
/// window yields `(0, true)` where the flag warns about the empty window.
pub fn nss(timeline: &SessionTimeline, threshold: f64, stage: Stage) -> (usize, bool) {
    let pts = stage.select(timeline);
    let empty = pts.is_empty();
    let count = pts.iter().filter(|p| p.prob_negative > threshold).count();
    (count, empty)
}

/// Mean absolute difference between consecutive in-window probabilities:
/// `1/(n-1) * sum |e_i - e_{i-1}|`. Undefined (absent) below two points.
pub fn ecr(timeline: &SessionTimeline, stage: Stage) -> Option<f64> {
    let pts = stage.select(timeline);
    if pts.len() < 2 {
        return None;
    }
    let sum: f64 = pts
        .windows(2)
        .map(|w| (w[1].prob_negative - w[0].prob_negative).abs())
        .sum();
    Some(sum / (pts.len() - 1) as f64)
}

pub fn write_timelines(path: &Path, timelines: &[SessionTimeline]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in timelines {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timelines(path: &Path) -> Result<Vec<SessionTimeline>> {
    let file = File::open(path)
        .map_err(|e| SerError::Data(format!("timelines {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: SessionTimeline = serde_json::from_str(&line).map_err(|e| {
            SerError::Data(format!("timelines {}:{}: {e}", path.display(), lineno + 1))
        })?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn timeline(probs: &[f64], segment_s: f64) -> SessionTimeline {
        SessionTimeline {
            session_id: "t".into(),
            group: None,
            points: probs
                .iter()
                .enumerate()
                .map(|(i, &p)| TimelinePoint {
                    t_start_s: i as f64 * segment_s,
                    t_end_s: (i + 1) as f64 * segment_s,
                    prob_negative: p,
                })
                .collect(),
        }
    }

    #[test]
    fn nss_counts_above_threshold() {
        let t = timeline(&[0.9, 0.4, 0.6], 10.0);
        assert_eq!(nss(&t, 0.5, Stage::Full), (2, false));
        let low = timeline(&[0.1, 0.2, 0.3], 10.0);
        assert_eq!(nss(&low, 0.5, Stage::Full), (0, false));
    }

    #[test]
    fn nss_empty_window_is_zero_with_warning() {
        let t = timeline(&[], 10.0);
        assert_eq!(nss(&t, 0.5, Stage::Full), (0, true));
    }

    #[test]
    fn ecr_matches_direct_evaluation() {
        assert_eq!(ecr(&timeline(&[0.2, 0.2, 0.2], 10.0), Stage::Full), Some(0.0));
        assert_eq!(ecr(&timeline(&[1.0, 0.0, 1.0], 10.0), Stage::Full), Some(1.0));
        let got = ecr(&timeline(&[0.1, 0.5, 0.2], 10.0), Stage::Full).unwrap();
        assert!((got - 0.35).abs() < 1e-12);
    }

    #[test]
    fn ecr_is_absent_below_two_points() {
        assert_eq!(ecr(&timeline(&[0.7], 10.0), Stage::Full), None);
        assert_eq!(ecr(&timeline(&[], 10.0), Stage::Full), None);
    }

    #[test]
    fn ecr_is_invariant_under_polarity_flip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.gen_range(2..30);
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let flipped: Vec<f64> = probs.iter().map(|p| 1.0 - p).collect();
            let a = ecr(&timeline(&probs, 10.0), Stage::Full).unwrap();
            let b = ecr(&timeline(&flipped, 10.0), Stage::Full).unwrap();
            assert!((a - b).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn appending_a_duplicate_point_renormalizes_exactly() {
        let probs = [0.1, 0.5, 0.2];
        let base = ecr(&timeline(&probs, 10.0), Stage::Full).unwrap();
        let extended = ecr(&timeline(&[0.1, 0.5, 0.2, 0.2], 10.0), Stage::Full).unwrap();
        // Same numerator, one more interval.
        assert!((extended - base * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn assessment_stage_selects_first_30_minutes() {
        // 200 x 10 s segments = 2000 s; assessment covers starts < 1800 s.
        let probs: Vec<f64> = (0..200).map(|i| if i < 180 { 0.9 } else { 0.1 }).collect();
        let t = timeline(&probs, 10.0);
        assert_eq!(nss(&t, 0.5, Stage::Assessment), (180, false));
        assert_eq!(nss(&t, 0.5, Stage::Full), (180, false));
    }

    #[test]
    fn validation_rejects_disorder_and_bad_probs() {
        let mut t = timeline(&[0.5, 0.6], 10.0);
        t.points[1].t_start_s = 5.0; // overlaps the first segment
        assert!(t.validate().is_err());
        let mut t2 = timeline(&[0.5], 10.0);
        t2.points[0].prob_negative = 1.5;
        assert!(t2.validate().is_err());
    }
}
