//! Implementations behind the `ser` subcommands. Argument parsing lives in
//! the binary; everything here takes a loaded [`RunConfig`] and paths, and
//! writes machine-readable reports stamped with the config hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, preprocess, read_manifest};
use crate::config::RunConfig;
use crate::error::{Result, SerError};
use crate::features::{mfcc_39_with, pitch_contour_with, write_feature_dump};
use crate::model::{prepare_inputs, Ablation, FeatureSet, FusionModel, ModelConfig};
use crate::numerics::save_checkpoint;
use crate::seed::fnv1a64;
use crate::synth::gen_corpus;
use crate::train::{
    evaluate, filter_by_subjects, load_dataset, make_split, train, EvalReport, SplitPlan,
    TrainExample,
};
use crate::trend::{
    build_report, read_timelines, write_session_csv, write_timelines, ReportOptions,
    SessionTimeline, TimelinePoint, TrendReport,
};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub n_segments: usize,
    pub n_sessions: usize,
    pub manifest: String,
    pub sessions: String,
}

/// `synth`: write a labeled synthetic corpus plus session timelines.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<SynthReport> {
    std::fs::create_dir_all(out_dir)?;
    let out = gen_corpus(&cfg.synth, &cfg.sessions, out_dir)?;
    cfg.save(&out_dir.join("config.toml"))?;
    // Relative names keep report files byte-identical across output dirs.
    let report = SynthReport {
        schema_version: 1,
        config_hash: cfg.hash(),
        n_segments: out.records.len(),
        n_sessions: 2 * cfg.sessions.sessions_per_group,
        manifest: "manifest.jsonl".to_string(),
        sessions: "sessions.jsonl".to_string(),
    };
    write_json(&out_dir.join("synth_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub n_segments: usize,
}

/// `extract`: cache MFCC and pitch features for every manifest segment.
pub fn cmd_extract(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<ExtractReport> {
    std::fs::create_dir_all(out_dir)?;
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        return Err(SerError::Data("extract: empty manifest".into()));
    }
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    for (i, rec) in records.iter().enumerate() {
        let seg = preprocess(&load_wav(&base.join(&rec.path))?)?;
        let mfcc = mfcc_39_with(&seg, &cfg.mfcc)?;
        let pitch = pitch_contour_with(&seg, &cfg.pitch)?;
        write_feature_dump(&out_dir.join(format!("{i:05}.mfcc.bin")), &mfcc)?;
        write_feature_dump(&out_dir.join(format!("{i:05}.pitch.bin")), &pitch)?;
    }
    let report = ExtractReport {
        schema_version: 1,
        config_hash: cfg.hash(),
        n_segments: records.len(),
    };
    write_json(&out_dir.join("extract_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: Option<usize>,
    pub best_val_f1: f64,
    pub test: EvalReport,
    pub checkpoint: String,
}

/// Split a prepared dataset by the plan sides.
fn split_dataset(
    examples: &[TrainExample],
    plan: &SplitPlan,
) -> (Vec<TrainExample>, Vec<TrainExample>, Vec<TrainExample>) {
    (
        filter_by_subjects(examples, &plan.train_subjects),
        filter_by_subjects(examples, &plan.val_subjects),
        filter_by_subjects(examples, &plan.test_subjects),
    )
}

/// `train`: subject-level split, train, retain the best checkpoint, and
/// evaluate the held-out test side.
pub fn cmd_train(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<TrainReport> {
    std::fs::create_dir_all(out_dir)?;
    let examples = load_dataset(manifest, &cfg.model, &cfg.classes, cfg.train.threads)?;
    let subjects: Vec<String> = examples.iter().map(|e| e.subject.clone()).collect();
    let plan = make_split(&subjects, cfg.split.seed, cfg.split.scheme)?;
    plan.assert_disjoint()?;
    write_json(&out_dir.join("split.json"), &plan)?;

    let (train_set, val_set, test_set) = split_dataset(&examples, &plan);
    let mut model = FusionModel::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let log = train(&mut model, &train_set, &val_set, &cfg.train)?;
    let epochs_csv = format!("# config_hash={}\n{}", cfg.hash(), log.to_csv());
    std::fs::write(out_dir.join("epochs.csv"), epochs_csv)?;

    let ckpt_path = out_dir.join("checkpoint.bin");
    save_checkpoint(
        &ckpt_path,
        &model.params,
        serde_json::to_value(&cfg.model)?,
        &cfg.hash(),
    )?;

    let test_report = evaluate(&model, &test_set)?;
    let report = TrainReport {
        schema_version: 1,
        config_hash: cfg.hash(),
        n_train: train_set.len(),
        n_val: val_set.len(),
        n_test: test_set.len(),
        best_epoch: log.best_epoch,
        best_val_f1: if log.best_val_f1.is_finite() { log.best_val_f1 } else { 0.0 },
        test: test_report,
        checkpoint: "checkpoint.bin".to_string(),
    };
    write_json(&out_dir.join("train_report.json"), &report)?;
    cfg.save(&out_dir.join("config.toml"))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSide {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for EvalSide {
    type Err = SerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EvalSide::Train),
            "val" => Ok(EvalSide::Val),
            "test" => Ok(EvalSide::Test),
            "all" => Ok(EvalSide::All),
            other => Err(SerError::Usage(format!("unknown side {other}"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReportFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub n_examples: usize,
    pub report: EvalReport,
}

/// `evaluate`: score a manifest (optionally one side of a stored split)
/// with a checkpoint.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    manifest: &Path,
    checkpoint: &Path,
    split_file: Option<&Path>,
    side: EvalSide,
    out_dir: &Path,
) -> Result<EvalReportFile> {
    std::fs::create_dir_all(out_dir)?;
    let model = FusionModel::from_checkpoint(checkpoint)?;
    let examples = load_dataset(manifest, &model.cfg, &cfg.classes, cfg.train.threads)?;
    let subset = match (split_file, side) {
        (None, EvalSide::All) => examples,
        (None, _) => {
            return Err(SerError::Usage(
                "evaluating one split side needs --split-file".into(),
            ))
        }
        (Some(path), side) => {
            let plan: SplitPlan = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            match side {
                EvalSide::Train => filter_by_subjects(&examples, &plan.train_subjects),
                EvalSide::Val => filter_by_subjects(&examples, &plan.val_subjects),
                EvalSide::Test => filter_by_subjects(&examples, &plan.test_subjects),
                EvalSide::All => examples,
            }
        }
    };
    if subset.is_empty() {
        return Err(SerError::Data("evaluate: selected side has no examples".into()));
    }
    let report = evaluate(&model, &subset)?;
    let file = EvalReportFile {
        schema_version: 1,
        config_hash: cfg.hash(),
        n_examples: subset.len(),
        report,
    };
    write_json(&out_dir.join("eval.json"), &file)?;
    let csv = format!(
        "# config_hash={}\naccuracy,precision,recall,f1,recall_weighted,f1_weighted,ua,wa,n\n{},{},{},{},{},{},{},{},{}\n",
        cfg.hash(),
        file.report.accuracy,
        file.report.precision,
        file.report.recall,
        file.report.f1,
        file.report.recall_weighted,
        file.report.f1_weighted,
        file.report.ua,
        file.report.wa,
        file.report.n
    );
    std::fs::write(out_dir.join("eval.csv"), csv)?;
    Ok(file)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub features: String,
    pub attention: String,
    pub report: EvalReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub feature_rows: Vec<AblationRow>,
    pub attention_rows: Vec<AblationRow>,
}

fn feature_set_name(fs: FeatureSet) -> &'static str {
    match (fs.deep, fs.pitch, fs.mfcc) {
        (true, true, true) => "deep+pitch+mfcc",
        (true, false, false) => "deep",
        (false, true, false) => "pitch",
        (false, false, true) => "mfcc",
        (true, true, false) => "deep+pitch",
        (true, false, true) => "deep+mfcc",
        (false, true, true) => "pitch+mfcc",
        (false, false, false) => "none",
    }
}

fn ablation_name(a: Ablation) -> &'static str {
    match a {
        Ablation::Vanilla => "vanilla",
        Ablation::CrossOnly => "cross_only",
        Ablation::SelfOnly => "self_only",
        Ablation::Both => "both",
    }
}

/// `ablate`: train/evaluate the feature rows (single features vs merged)
/// and the attention rows (vanilla, cross-only, self-only, full model) on
/// one corpus and shared split, and emit a combined table.
pub fn cmd_ablate(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<AblationReport> {
    std::fs::create_dir_all(out_dir)?;
    // The grid spans every feature subset, so extract all three features
    // regardless of the configured subset.
    let mut extract_cfg = cfg.model.clone();
    extract_cfg.fusion.feature_set = FeatureSet::ALL;
    let examples = load_dataset(manifest, &extract_cfg, &cfg.classes, cfg.train.threads)?;
    let subjects: Vec<String> = examples.iter().map(|e| e.subject.clone()).collect();
    let plan = make_split(&subjects, cfg.split.seed, cfg.split.scheme)?;
    let (train_set, val_set, test_set) = split_dataset(&examples, &plan);

    let run_row = |features: FeatureSet, ablation: Ablation| -> Result<EvalReport> {
        let mut model_cfg: ModelConfig = cfg.model.clone();
        model_cfg.fusion.feature_set = features;
        model_cfg.fusion.ablation = ablation;
        let mut model = FusionModel::<f32>::new(model_cfg, cfg.seed)?;
        train(&mut model, &train_set, &val_set, &cfg.train)?;
        evaluate(&model, &test_set)
    };

    // The full model appears in both tables; train it once.
    let merged_report = run_row(FeatureSet::ALL, Ablation::Both)?;

    let feature_axis = [
        ("Deep (f_w)", FeatureSet::single("deep")?),
        ("Pitch (f_p)", FeatureSet::single("pitch")?),
        ("MFCC (f_m)", FeatureSet::single("mfcc")?),
    ];
    let mut feature_rows = Vec::new();
    for (name, fs) in feature_axis {
        feature_rows.push(AblationRow {
            name: name.to_string(),
            features: feature_set_name(fs).to_string(),
            attention: ablation_name(Ablation::Both).to_string(),
            report: run_row(fs, Ablation::Both)?,
        });
    }
    feature_rows.push(AblationRow {
        name: "Merged (F)".to_string(),
        features: feature_set_name(FeatureSet::ALL).to_string(),
        attention: ablation_name(Ablation::Both).to_string(),
        report: merged_report.clone(),
    });

    let attention_axis = [
        ("Vanilla", Ablation::Vanilla),
        ("Cross-attention", Ablation::CrossOnly),
        ("Self-attention", Ablation::SelfOnly),
    ];
    let mut attention_rows = Vec::new();
    for (name, ab) in attention_axis {
        attention_rows.push(AblationRow {
            name: name.to_string(),
            features: feature_set_name(FeatureSet::ALL).to_string(),
            attention: ablation_name(ab).to_string(),
            report: run_row(FeatureSet::ALL, ab)?,
        });
    }
    attention_rows.push(AblationRow {
        name: "Proposed".to_string(),
        features: feature_set_name(FeatureSet::ALL).to_string(),
        attention: ablation_name(Ablation::Both).to_string(),
        report: merged_report,
    });

    let report = AblationReport {
        schema_version: 1,
        config_hash: cfg.hash(),
        feature_rows,
        attention_rows,
    };
    write_json(&out_dir.join("ablation.json"), &report)?;

    let mut csv = format!("# config_hash={}\n", cfg.hash());
    csv.push_str("table,name,features,attention,accuracy,recall,f1\n");
    for (table, rows) in [("feature", &report.feature_rows), ("attention", &report.attention_rows)]
    {
        for r in rows {
            csv.push_str(&format!(
                "{table},{},{},{},{},{},{}\n",
                r.name, r.features, r.attention, r.report.accuracy, r.report.recall, r.report.f1
            ));
        }
    }
    std::fs::write(out_dir.join("ablation.csv"), csv)?;
    Ok(report)
}

/// Score a manifest of session segments into timelines with a checkpoint.
pub fn score_timelines(
    model: &FusionModel<f32>,
    manifest: &Path,
    groups: Option<&BTreeMap<String, String>>,
) -> Result<Vec<SessionTimeline>> {
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        return Err(SerError::Data("score: empty manifest".into()));
    }
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut by_session: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for rec in &records {
        let seg = preprocess(&load_wav(&base.join(&rec.path))?)?;
        let inputs = prepare_inputs(&seg, &model.cfg)?;
        let pred = model.predict_inputs(&inputs)?;
        by_session.entry(rec.session_id.clone()).or_default().push((
            rec.start_s,
            rec.end_s,
            pred.prob_negative() as f64,
        ));
    }
    let mut timelines = Vec::new();
    for (session_id, mut pts) in by_session {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        let timeline = SessionTimeline {
            group: groups.and_then(|g| g.get(&session_id).cloned()),
            points: pts
                .into_iter()
                .map(|(t0, t1, p)| TimelinePoint {
                    t_start_s: t0,
                    t_end_s: t1,
                    prob_negative: p,
                })
                .collect(),
            session_id,
        };
        timeline.validate()?;
        timelines.push(timeline);
    }
    Ok(timelines)
}

pub struct TrendInputs<'a> {
    /// Pre-scored timelines (JSON Lines), or...
    pub timelines: Option<&'a Path>,
    /// ...a manifest to score with a checkpoint.
    pub manifest: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    /// Optional `{session_id: group}` JSON map for the scored path.
    pub groups: Option<&'a Path>,
}

/// `analyze-trends`: NSS/ECR per stage and group with bootstrap intervals
/// and permutation p-values, plus the per-session plotting CSV.
pub fn cmd_analyze_trends(
    cfg: &RunConfig,
    inputs: TrendInputs<'_>,
    out_dir: &Path,
) -> Result<TrendReport> {
    std::fs::create_dir_all(out_dir)?;
    let timelines = match (inputs.timelines, inputs.manifest, inputs.checkpoint) {
        (Some(path), _, _) => read_timelines(path)?,
        (None, Some(manifest), Some(ckpt)) => {
            let model = FusionModel::from_checkpoint(ckpt)?;
            let groups: Option<BTreeMap<String, String>> = match inputs.groups {
                Some(g) => Some(serde_json::from_str(&std::fs::read_to_string(g)?)?),
                None => None,
            };
            let timelines = score_timelines(&model, manifest, groups.as_ref())?;
            write_timelines(&out_dir.join("scored_timelines.jsonl"), &timelines)?;
            timelines
        }
        _ => {
            return Err(SerError::Usage(
                "analyze-trends needs --timelines or (--manifest and --checkpoint)".into(),
            ))
        }
    };

    let opts = ReportOptions {
        nss_threshold: cfg.trend.nss_threshold,
        bootstrap_iters: cfg.trend.bootstrap_iters,
        permutation_iters: cfg.trend.permutation_iters,
        test: cfg.trend.test,
        seed: cfg.trend.seed,
        config_hash: cfg.hash(),
    };
    let report = build_report(&timelines, &opts)?;
    write_json(&out_dir.join("trend_report.json"), &report)?;
    write_session_csv(
        &out_dir.join("sessions.csv"),
        &timelines,
        cfg.trend.smooth_window,
        Some(&format!("config_hash={}", cfg.hash())),
    )?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub schema_version: u32,
    pub config_hash: String,
    pub total_params: usize,
    pub params: Vec<ParamInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// FNV-1a over the little-endian bytes.
    pub checksum: String,
}

/// `inspect-checkpoint`: names, shapes, and checksums of every parameter.
pub fn cmd_inspect_checkpoint(checkpoint: &Path) -> Result<CheckpointInfo> {
    let (manifest, store) = crate::numerics::load_checkpoint(checkpoint)?;
    let mut params = Vec::new();
    for (name, tensor) in store.iter() {
        let bytes: Vec<u8> = tensor.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        params.push(ParamInfo {
            name: name.to_string(),
            shape: tensor.shape.clone(),
            checksum: format!("{:016x}", fnv1a64(&bytes)),
        });
    }
    Ok(CheckpointInfo {
        schema_version: manifest.schema_version,
        config_hash: manifest.config_hash,
        total_params: store.total_elements(),
        params,
    })
}

/// Shared sanity check for output directories given on the command line.
pub fn ensure_dir(path: &str) -> Result<PathBuf> {
    let p = PathBuf::from(path);
    if p.as_os_str().is_empty() {
        return Err(SerError::Usage("empty output path".into()));
    }
    Ok(p)
}
