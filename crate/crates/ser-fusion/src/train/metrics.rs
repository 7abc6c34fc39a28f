//! Confusion-matrix bookkeeping and derived metrics.
//!
//! Every reported number is recomputable from the stored confusion matrix
//! by calling [`metrics_from_confusion`] again; the report carries nothing
//! that is not a pure function of those counts.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::model::FusionModel;
use crate::train::data::TrainExample;

/// `counts[true_class][predicted_class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(n_classes: usize) -> Self {
        Confusion { counts: vec![vec![0; n_classes]; n_classes] }
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    fn diag(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub n: u64,
    /// Binary headline metrics are for the positive ("negative emotion")
    /// class = index 1; multi-class headline recall/F1 are macro averages.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Support-weighted per-class variants.
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    /// Unweighted average recall over classes with support.
    pub ua: f64,
    /// Support-weighted average recall; equals accuracy by construction.
    pub wa: f64,
    pub confusion: Confusion,
}

/// Derive every metric from the confusion matrix alone.
pub fn metrics_from_confusion(confusion: &Confusion) -> Result<EvalReport> {
    let n = confusion.total();
    if n == 0 {
        return Err(SerError::Data("metrics: empty confusion matrix".into()));
    }
    let k = confusion.n_classes();
    let accuracy = confusion.diag() as f64 / n as f64;

    let mut per_class_recall = vec![0.0f64; k];
    let mut per_class_precision = vec![0.0f64; k];
    let mut per_class_f1 = vec![0.0f64; k];
    for c in 0..k {
        let tp = confusion.counts[c][c] as f64;
        let support = confusion.support(c) as f64;
        let predicted = confusion.predicted(c) as f64;
        per_class_recall[c] = if support > 0.0 { tp / support } else { 0.0 };
        per_class_precision[c] = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let denom = per_class_precision[c] + per_class_recall[c];
        per_class_f1[c] = if denom > 0.0 {
            2.0 * per_class_precision[c] * per_class_recall[c] / denom
        } else {
            0.0
        };
    }

    let present: Vec<usize> = (0..k).filter(|&c| confusion.support(c) > 0).collect();
    let ua = present.iter().map(|&c| per_class_recall[c]).sum::<f64>() / present.len() as f64;
    // Support-weighted recall collapses algebraically to sum(tp)/n, so it
    // is computed as accuracy to keep the identity exact in floats too.
    let wa = accuracy;
    let recall_weighted = wa;
    let f1_weighted = present
        .iter()
        .map(|&c| per_class_f1[c] * confusion.support(c) as f64 / n as f64)
        .sum::<f64>();

    let (precision, recall, f1) = if k == 2 {
        (per_class_precision[1], per_class_recall[1], per_class_f1[1])
    } else {
        let macro_p = present.iter().map(|&c| per_class_precision[c]).sum::<f64>()
            / present.len() as f64;
        let macro_f1 =
            present.iter().map(|&c| per_class_f1[c]).sum::<f64>() / present.len() as f64;
        (macro_p, ua, macro_f1)
    };

    Ok(EvalReport {
        schema_version: 1,
        n,
        accuracy,
        precision,
        recall,
        f1,
        recall_weighted,
        f1_weighted,
        ua,
        wa,
        confusion: confusion.clone(),
    })
}

/// Score labeled examples with a model and derive the report.
pub fn evaluate(model: &FusionModel<f32>, examples: &[TrainExample]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(SerError::Data("evaluate: no examples".into()));
    }
    let k = model.cfg.fusion.n_classes.max(2);
    let mut confusion = Confusion::new(k);
    for ex in examples {
        let pred = model.predict_inputs(&ex.inputs)?;
        confusion.record(ex.label, pred.predicted_class());
    }
    metrics_from_confusion(&confusion)
}
