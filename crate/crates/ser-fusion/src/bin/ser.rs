//! Thin command-line front end; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ser_fusion::cli::{
    cmd_ablate, cmd_analyze_trends, cmd_evaluate, cmd_extract, cmd_inspect_checkpoint, cmd_synth,
    cmd_train, EvalSide, TrendInputs,
};
use ser_fusion::config::RunConfig;
use ser_fusion::error::Result;

#[derive(Parser)]
#[command(
    name = "ser",
    about = "Speech emotion recognition via attention-based feature fusion, with session-level emotion-trend analytics",
    version
)]
struct Args {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed override; re-derives every subsystem seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the effective configuration before running.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus and session timelines.
    Synth {
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
    /// Cache MFCC and pitch features for a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "features")]
        out: PathBuf,
    },
    /// Train on a manifest with a subject-level split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// split.json from a training run.
        #[arg(long)]
        split_file: Option<PathBuf>,
        /// Which side of the split: train | val | test | all.
        #[arg(long, default_value = "all")]
        side: String,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Train and evaluate the feature and attention ablation grids.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// Session-level NSS/ECR statistics with bootstrap CIs and p-values.
    AnalyzeTrends {
        /// Pre-scored timelines (JSON Lines).
        #[arg(long)]
        timelines: Option<PathBuf>,
        /// Manifest of session segments to score (with --checkpoint).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Optional JSON map {session_id: group} for the scored path.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long, default_value = "trends")]
        out: PathBuf,
    },
    /// Dump parameter names, shapes, and checksums of a checkpoint.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn run(args: Args) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_root_seed(seed);
    }
    cfg.validate()?;
    if args.print_config {
        println!("{}", cfg.to_toml()?);
    }

    match args.command {
        Command::Synth { out } => {
            let report = cmd_synth(&cfg, &out)?;
            println!(
                "synth: {} segments, {} sessions -> {}",
                report.n_segments,
                report.n_sessions,
                out.display()
            );
        }
        Command::Extract { manifest, out } => {
            let report = cmd_extract(&cfg, &manifest, &out)?;
            println!("extract: {} segments -> {}", report.n_segments, out.display());
        }
        Command::Train { manifest, out } => {
            let report = cmd_train(&cfg, &manifest, &out)?;
            println!(
                "train: {} train / {} val / {} test; test accuracy {:.4}, f1 {:.4} -> {}",
                report.n_train,
                report.n_val,
                report.n_test,
                report.test.accuracy,
                report.test.f1,
                out.display()
            );
        }
        Command::Evaluate { manifest, checkpoint, split_file, side, out } => {
            let side: EvalSide = side.parse()?;
            let file =
                cmd_evaluate(&cfg, &manifest, &checkpoint, split_file.as_deref(), side, &out)?;
            println!(
                "evaluate: n={} accuracy {:.4} recall {:.4} f1 {:.4} -> {}",
                file.n_examples,
                file.report.accuracy,
                file.report.recall,
                file.report.f1,
                out.display()
            );
        }
        Command::Ablate { manifest, out } => {
            let report = cmd_ablate(&cfg, &manifest, &out)?;
            for row in report.feature_rows.iter().chain(&report.attention_rows) {
                println!(
                    "{:<18} acc {:.4} recall {:.4} f1 {:.4}",
                    row.name, row.report.accuracy, row.report.recall, row.report.f1
                );
            }
        }
        Command::AnalyzeTrends { timelines, manifest, checkpoint, groups, out } => {
            let report = cmd_analyze_trends(
                &cfg,
                TrendInputs {
                    timelines: timelines.as_deref(),
                    manifest: manifest.as_deref(),
                    checkpoint: checkpoint.as_deref(),
                    groups: groups.as_deref(),
                },
                &out,
            )?;
            for row in &report.table {
                println!("{row}");
            }
        }
        Command::InspectCheckpoint { checkpoint } => {
            let info = cmd_inspect_checkpoint(&checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
