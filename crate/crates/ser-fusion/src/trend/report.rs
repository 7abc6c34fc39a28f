//! Group x stage aggregation into a serializable trend report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::seed::SeedStream;
use crate::trend::stats::{bootstrap_ci, mann_whitney_u_pvalue, permutation_pvalue};
use crate::trend::{ecr, nss, SessionTimeline, Stage, ASSESSMENT_WINDOW_S};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupStageStats {
    pub n_sessions: usize,
    pub nss_mean: f64,
    pub nss_ci: [f64; 2],
    /// Sessions contributing an ECR (those with at least two points).
    pub ecr_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecr_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecr_ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StagePValues {
    pub nss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTest {
    Permutation,
    MannWhitney,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub nss_threshold: f64,
    /// group -> stage ("assessment"/"full") -> stats
    pub groups: BTreeMap<String, BTreeMap<String, GroupStageStats>>,
    /// Present only when exactly two labeled groups exist.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_values: Option<BTreeMap<String, StagePValues>>,
    /// Sessions shorter than the assessment window (assessment == full).
    pub short_sessions: Vec<String>,
    /// Human-readable rows, one `mean [lo, hi]` cell per metric.
    pub table: Vec<String>,
}

pub struct ReportOptions {
    pub nss_threshold: f64,
    pub bootstrap_iters: usize,
    pub permutation_iters: usize,
    pub test: GroupTest,
    pub seed: u64,
    pub config_hash: String,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            nss_threshold: 0.5,
            bootstrap_iters: 10_000,
            permutation_iters: 10_000,
            test: GroupTest::Permutation,
            seed: 42,
            config_hash: String::new(),
        }
    }
}

const STAGES: [(Stage, &str); 2] = [(Stage::Assessment, "assessment"), (Stage::Full, "full")];

/// Aggregate scored timelines into per-group, per-stage NSS/ECR statistics
/// with bootstrap intervals, plus group-difference p-values when exactly
/// two labeled groups are present.
pub fn build_report(timelines: &[SessionTimeline], opts: &ReportOptions) -> Result<TrendReport> {
    if timelines.is_empty() {
        return Err(SerError::Data("build_report: no sessions".into()));
    }
    for t in timelines {
        t.validate()?;
    }

    let short_sessions: Vec<String> = timelines
        .iter()
        .filter(|t| t.duration_s() < ASSESSMENT_WINDOW_S)
        .map(|t| t.session_id.clone())
        .collect();

    let mut by_group: BTreeMap<String, Vec<&SessionTimeline>> = BTreeMap::new();
    for t in timelines {
        by_group
            .entry(t.group.clone().unwrap_or_else(|| "ungrouped".into()))
            .or_default()
            .push(t);
    }

    type MetricVectors = BTreeMap<(String, &'static str), (Vec<f64>, Vec<f64>)>;
    let seeds = SeedStream::new(opts.seed);
    let mut groups = BTreeMap::new();
    // Per group/stage metric vectors, kept for the p-values below.
    let mut metric_values: MetricVectors = BTreeMap::new();

    for (gname, sessions) in &by_group {
        let mut stages = BTreeMap::new();
        for (stage, sname) in STAGES {
            let nss_vals: Vec<f64> = sessions
                .iter()
                .map(|t| nss(t, opts.nss_threshold, stage).0 as f64)
                .collect();
            let ecr_vals: Vec<f64> =
                sessions.iter().filter_map(|t| ecr(t, stage)).collect();

            let bseed = seeds.derive("bootstrap").derive(gname).derive(sname);
            let nss_ci = bootstrap_ci(
                &nss_vals,
                0.95,
                opts.bootstrap_iters,
                bseed.derive("nss").seed(),
            )?;
            let nss_mean = nss_vals.iter().sum::<f64>() / nss_vals.len() as f64;

            let (ecr_mean, ecr_ci) = if ecr_vals.is_empty() {
                (None, None)
            } else {
                let m = ecr_vals.iter().sum::<f64>() / ecr_vals.len() as f64;
                let ci = bootstrap_ci(
                    &ecr_vals,
                    0.95,
                    opts.bootstrap_iters,
                    bseed.derive("ecr").seed(),
                )?;
                (Some(m), Some([ci.0, ci.1]))
            };

            stages.insert(
                sname.to_string(),
                GroupStageStats {
                    n_sessions: sessions.len(),
                    nss_mean,
                    nss_ci: [nss_ci.0, nss_ci.1],
                    ecr_n: ecr_vals.len(),
                    ecr_mean,
                    ecr_ci,
                },
            );
            metric_values.insert((gname.clone(), sname), (nss_vals, ecr_vals));
        }
        groups.insert(gname.clone(), stages);
    }

    // Two labeled groups -> p-values per stage and metric.
    let labeled: Vec<&String> = by_group
        .keys()
        .filter(|g| g.as_str() != "ungrouped")
        .collect();
    let p_values = if labeled.len() == 2 {
        let (ga, gb) = (labeled[0].clone(), labeled[1].clone());
        let mut per_stage = BTreeMap::new();
        for (_, sname) in STAGES {
            let (nss_a, ecr_a) = &metric_values[&(ga.clone(), sname)];
            let (nss_b, ecr_b) = &metric_values[&(gb.clone(), sname)];
            let pseed = seeds.derive("pvalue").derive(sname);
            let p_nss = match opts.test {
                GroupTest::Permutation => permutation_pvalue(
                    nss_a,
                    nss_b,
                    opts.permutation_iters,
                    pseed.derive("nss").seed(),
                )?,
                GroupTest::MannWhitney => mann_whitney_u_pvalue(nss_a, nss_b)?,
            };
            let p_ecr = if ecr_a.is_empty() || ecr_b.is_empty() {
                None
            } else {
                Some(match opts.test {
                    GroupTest::Permutation => permutation_pvalue(
                        ecr_a,
                        ecr_b,
                        opts.permutation_iters,
                        pseed.derive("ecr").seed(),
                    )?,
                    GroupTest::MannWhitney => mann_whitney_u_pvalue(ecr_a, ecr_b)?,
                })
            };
            per_stage.insert(sname.to_string(), StagePValues { nss: p_nss, ecr: p_ecr });
        }
        Some(per_stage)
    } else {
        None
    };

    let table = render_table(&groups);
    Ok(TrendReport {
        schema_version: 1,
        config_hash: opts.config_hash.clone(),
        nss_threshold: opts.nss_threshold,
        groups,
        p_values,
        short_sessions,
        table,
    })
}

/// Rows shaped `Group | Stage | NSS mean [lo, hi] | ECR mean [lo, hi]`.
fn render_table(groups: &BTreeMap<String, BTreeMap<String, GroupStageStats>>) -> Vec<String> {
    let mut rows = vec!["group | stage | nss_mean [lo, hi] | ecr_mean [lo, hi]".to_string()];
    for (g, stages) in groups {
        for (sname, st) in stages {
            let nss_cell = format!(
                "{:.0} [{:.0}, {:.0}]",
                st.nss_mean, st.nss_ci[0], st.nss_ci[1]
            );
            let ecr_cell = match (st.ecr_mean, st.ecr_ci) {
                (Some(m), Some(ci)) => format!("{:.2} [{:.2}, {:.2}]", m, ci[0], ci[1]),
                _ => "absent".to_string(),
            };
            rows.push(format!("{g} | {sname} | {nss_cell} | {ecr_cell}"));
        }
    }
    rows
}

/// Per-session time series for external plotting. One row per segment;
/// with `smooth_window` set, a centered moving average is appended as an
/// extra, clearly named column.
pub fn write_session_csv(
    path: &Path,
    timelines: &[SessionTimeline],
    smooth_window: Option<usize>,
    comment: Option<&str>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    match smooth_window {
        Some(win) => writeln!(
            w,
            "session_id,t_start_s,t_end_s,prob_negative,prob_negative_ma{win}"
        )?,
        None => writeln!(w, "session_id,t_start_s,t_end_s,prob_negative")?,
    }
    for t in timelines {
        let probs: Vec<f64> = t.points.iter().map(|p| p.prob_negative).collect();
        for (i, p) in t.points.iter().enumerate() {
            match smooth_window {
                Some(win) => {
                    let half = win / 2;
                    let lo = i.saturating_sub(half);
                    let hi = (i + half + 1).min(probs.len());
                    let ma = probs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        t.session_id, p.t_start_s, p.t_end_s, p.prob_negative, ma
                    )?;
                }
                None => writeln!(
                    w,
                    "{},{},{},{}",
                    t.session_id, p.t_start_s, p.t_end_s, p.prob_negative
                )?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_sessions, SessionSpec};
    use crate::trend::TimelinePoint;

    fn session(id: &str, group: Option<&str>, probs: &[f64]) -> SessionTimeline {
        SessionTimeline {
            session_id: id.into(),
            group: group.map(String::from),
            points: probs
                .iter()
                .enumerate()
                .map(|(i, &p)| TimelinePoint {
                    t_start_s: i as f64 * 10.0,
                    t_end_s: (i + 1) as f64 * 10.0,
                    prob_negative: p,
                })
                .collect(),
        }
    }

    #[test]
    fn single_session_has_no_p_values_and_is_flagged_short() {
        let report =
            build_report(&[session("only", None, &[0.9, 0.1, 0.8])], &ReportOptions::default())
                .unwrap();
        assert!(report.p_values.is_none());
        assert_eq!(report.short_sessions, vec!["only".to_string()]);
        let st = &report.groups["ungrouped"]["assessment"];
        // Shorter than 30 min: assessment equals full.
        assert_eq!(st.nss_mean, report.groups["ungrouped"]["full"].nss_mean);
    }

    #[test]
    fn constructed_separation_is_detected() {
        let spec = SessionSpec::default(); // alternation 0.8 vs 0.1, n = 20+20
        let timelines = gen_sessions(&spec).unwrap();
        let opts = ReportOptions { bootstrap_iters: 2000, permutation_iters: 2000, ..ReportOptions::default() };
        let report = build_report(&timelines, &opts).unwrap();
        let p = report.p_values.as_ref().unwrap();
        for stage in ["assessment", "full"] {
            let ecr_hi = report.groups["suicide"][stage].ecr_mean.unwrap();
            let ecr_lo = report.groups["non_suicide"][stage].ecr_mean.unwrap();
            assert!(ecr_hi > ecr_lo);
            assert!(p[stage].ecr.unwrap() < 0.01, "{stage}: p = {:?}", p[stage].ecr);
        }
    }

    #[test]
    fn table_cells_have_mean_bracket_structure() {
        let timelines = vec![
            session("a1", Some("suicide"), &[0.9; 200]),
            session("a2", Some("suicide"), &[0.8; 200]),
            session("b1", Some("non_suicide"), &[0.1; 200]),
            session("b2", Some("non_suicide"), &[0.2; 200]),
        ];
        let opts = ReportOptions { bootstrap_iters: 500, permutation_iters: 500, ..ReportOptions::default() };
        let report = build_report(&timelines, &opts).unwrap();
        // Header + 2 groups x 2 stages.
        assert_eq!(report.table.len(), 5);
        let re = |s: &str| {
            // "<group> | <stage> | <int> [<int>, <int>] | <float> [<float>, <float>]"
            let parts: Vec<&str> = s.split(" | ").collect();
            assert_eq!(parts.len(), 4, "row: {s}");
            assert!(parts[2].contains('[') && parts[2].contains(']'));
            assert!(parts[3].contains('[') && parts[3].contains(']'));
        };
        for row in &report.table[1..] {
            re(row);
        }
        // Determinism of the whole report under the same options.
        let again = build_report(&timelines, &opts).unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn csv_emits_one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.csv");
        let timelines = vec![session("x", None, &[0.5, 0.6, 0.7])];
        write_session_csv(&path, &timelines, Some(5), None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].ends_with("prob_negative_ma5"));
    }
}
