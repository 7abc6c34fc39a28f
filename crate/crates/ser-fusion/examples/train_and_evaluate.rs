//! End-to-end desk-scale run: synthesize a corpus, train the full fusion
//! model with a subject-level split, and evaluate the held-out subjects.
//! Takes a couple of minutes on a laptop CPU.
//!
//! ```bash
//! cargo run --release --example train_and_evaluate
//! ```

use ser_fusion::model::{ConvLayerCfg, FusionModel, ModelConfig};
use ser_fusion::numerics::AdamConfig;
use ser_fusion::synth::{gen_corpus, CorpusSpec, SessionSpec};
use ser_fusion::train::{
    evaluate, filter_by_subjects, load_dataset, make_split, train, TrainConfig, ValScheme,
};

/// Reduced instance of the default architecture (same shape, smaller
/// widths) so the example stays fast on two cores.
fn small_model_config() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.deep.conv_layers = vec![
        ConvLayerCfg { kernel: 10, stride: 5, channels: 4 },
        ConvLayerCfg { kernel: 8, stride: 4, channels: 8 },
        ConvLayerCfg { kernel: 8, stride: 4, channels: 16 },
        ConvLayerCfg { kernel: 8, stride: 4, channels: 16 },
    ];
    cfg.deep.transformer_layers = 1;
    cfg.deep.d_model = 16;
    cfg.deep.ffn_width = 32;
    cfg.pitch.conv_layers = vec![ConvLayerCfg { kernel: 3, stride: 2, channels: 16 }];
    cfg.pitch.d_model = 16;
    cfg.pitch.ffn_width = 32;
    cfg.mfcc_hidden = 8;
    cfg.fusion.d_model = 16;
    cfg
}

fn main() -> Result<(), ser_fusion::SerError> {
    let out_dir = std::env::temp_dir().join("ser-fusion-example-train");
    let corpus = CorpusSpec { n_subjects: 8, segments_per_subject: 8, ..CorpusSpec::default() };
    let sessions = SessionSpec { sessions_per_group: 2, ..SessionSpec::default() };
    let out = gen_corpus(&corpus, &sessions, &out_dir)?;
    println!("corpus: {} segments", out.records.len());

    let model_cfg = small_model_config();
    let classes = vec!["non_negative".to_string(), "negative".to_string()];
    let examples = load_dataset(&out.manifest_path, &model_cfg, &classes, 2)?;

    let subjects: Vec<String> = examples.iter().map(|e| e.subject.clone()).collect();
    let plan = make_split(&subjects, 7, ValScheme::Fraction(0.2))?;
    println!(
        "split: {} train / {} val / {} test subjects",
        plan.train_subjects.len(),
        plan.val_subjects.len(),
        plan.test_subjects.len()
    );
    let train_set = filter_by_subjects(&examples, &plan.train_subjects);
    let val_set = filter_by_subjects(&examples, &plan.val_subjects);
    let test_set = filter_by_subjects(&examples, &plan.test_subjects);

    let mut model = FusionModel::<f32>::new(model_cfg, 7)?;
    let train_cfg = TrainConfig {
        epochs: 4,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let log = train(&mut model, &train_set, &val_set, &train_cfg)?;
    for rec in &log.epochs {
        println!(
            "epoch {}: train loss {:.4}, val acc {:.3}, val f1 {:.3}",
            rec.epoch, rec.train_loss, rec.val_accuracy, rec.val_f1
        );
    }

    let report = evaluate(&model, &test_set)?;
    println!(
        "test: n={} accuracy {:.3} precision {:.3} recall {:.3} f1 {:.3}",
        report.n, report.accuracy, report.precision, report.recall, report.f1
    );
    Ok(())
}
