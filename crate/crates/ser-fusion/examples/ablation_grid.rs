//! Train the feature and attention ablation grids on a micro corpus and
//! print the combined table. A few minutes on two cores.
//!
//! ```bash
//! cargo run --release --example ablation_grid
//! ```

use ser_fusion::cli::cmd_ablate;
use ser_fusion::config::RunConfig;
use ser_fusion::model::ConvLayerCfg;
use ser_fusion::synth::gen_corpus;

fn main() -> Result<(), ser_fusion::SerError> {
    let out_dir = std::env::temp_dir().join("ser-fusion-example-ablation");

    let mut cfg = RunConfig::default().with_root_seed(13);
    cfg.synth.n_subjects = 8;
    cfg.synth.segments_per_subject = 8;
    cfg.sessions.sessions_per_group = 2;
    cfg.train.epochs = 3;
    cfg.train.adam.lr = 1e-3;
    // Reduced widths of the same architecture for speed.
    cfg.model.deep.conv_layers = vec![
        ConvLayerCfg { kernel: 10, stride: 5, channels: 4 },
        ConvLayerCfg { kernel: 8, stride: 4, channels: 8 },
        ConvLayerCfg { kernel: 8, stride: 4, channels: 16 },
        ConvLayerCfg { kernel: 8, stride: 4, channels: 16 },
    ];
    cfg.model.deep.transformer_layers = 1;
    cfg.model.deep.d_model = 16;
    cfg.model.deep.ffn_width = 32;
    cfg.model.pitch.conv_layers = vec![ConvLayerCfg { kernel: 3, stride: 2, channels: 16 }];
    cfg.model.pitch.d_model = 16;
    cfg.model.pitch.ffn_width = 32;
    cfg.model.mfcc_hidden = 8;
    cfg.model.fusion.d_model = 16;

    let corpus_dir = out_dir.join("corpus");
    let out = gen_corpus(&cfg.synth, &cfg.sessions, &corpus_dir)?;
    println!("corpus: {} segments", out.records.len());

    let report = cmd_ablate(&cfg, &out.manifest_path, &out_dir.join("ablation"))?;
    println!("\nfeature rows:");
    for row in &report.feature_rows {
        println!(
            "  {:<14} acc {:.3} recall {:.3} f1 {:.3}",
            row.name, row.report.accuracy, row.report.recall, row.report.f1
        );
    }
    println!("attention rows:");
    for row in &report.attention_rows {
        println!(
            "  {:<16} acc {:.3} recall {:.3} f1 {:.3}",
            row.name, row.report.accuracy, row.report.recall, row.report.f1
        );
    }
    println!("\nreports under {}", out_dir.display());
    Ok(())
}
