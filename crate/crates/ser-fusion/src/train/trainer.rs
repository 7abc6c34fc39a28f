//! The training loop.
//!
//! Epoch-shuffled mini-batches; per-example forward/backward fans out over
//! a scoped thread pool, and gradients are reduced in example order so the
//! result is bit-identical regardless of thread count. The checkpoint with
//! the best validation F1 is retained and restored at the end.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::model::FusionModel;
use crate::numerics::{adam_step, AdamConfig, AdamState, ParamStore};
use crate::seed::SeedStream;
use crate::train::data::TrainExample;
use crate::train::metrics::evaluate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Batch-level data parallelism; reduction order is fixed either way.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 30,
            adam: AdamConfig::default(),
            seed: 42,
            threads: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_f1: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_accuracy,val_recall,val_f1\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_accuracy, r.val_recall, r.val_f1
            ));
        }
        out
    }
}

/// Train in place. With a non-empty validation set the model ends at its
/// best-validation-F1 parameters; otherwise at the last epoch.
pub fn train(
    model: &mut FusionModel<f32>,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if train_set.is_empty() {
        return Err(SerError::Data("train: empty dataset".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(SerError::Usage("train: batch_size and epochs must be positive".into()));
    }
    let mut adam = AdamState::new(cfg.adam, &model.params)?;
    let seeds = SeedStream::new(cfg.seed);

    let mut log = TrainLog { epochs: Vec::new(), best_epoch: None, best_val_f1: f64::NEG_INFINITY };
    let mut best_params: Option<ParamStore<f32>> = None;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = seeds.derive("shuffle").derive_idx(epoch as u64).rng();
        for i in (1..order.len()).rev() {
            use rand::Rng;
            order.swap(i, rng.gen_range(0..=i));
        }

        let drop_seeds = seeds.derive("dropout").derive_idx(epoch as u64);
        let mut epoch_loss = 0.0f64;
        let mut n_batches = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let loss = run_batch(model, train_set, batch, &mut adam, cfg, &drop_seeds, b)?;
            if !loss.is_finite() {
                return Err(SerError::Numerical(format!(
                    "loss became {loss} at epoch {epoch} batch {b}"
                )));
            }
            epoch_loss += loss;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches as f64;

        let (val_accuracy, val_recall, val_f1) = if val_set.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let report = evaluate(model, val_set)?;
            (report.accuracy, report.recall, report.f1)
        };
        log.epochs.push(EpochRecord { epoch, train_loss, val_accuracy, val_recall, val_f1 });

        if !val_set.is_empty() && val_f1 > log.best_val_f1 {
            log.best_val_f1 = val_f1;
            log.best_epoch = Some(epoch);
            best_params = Some(model.params.clone());
        }
    }

    if let Some(best) = best_params {
        model.params.copy_from(&best)?;
    }
    Ok(log)
}

/// One optimizer step over a batch; returns the mean loss.
fn run_batch(
    model: &mut FusionModel<f32>,
    data: &[TrainExample],
    batch: &[usize],
    adam: &mut AdamState,
    cfg: &TrainConfig,
    drop_seeds: &SeedStream,
    batch_idx: usize,
) -> Result<f64> {
    let batch_seeds = drop_seeds.derive_idx(batch_idx as u64);
    let jobs: Vec<(usize, u64)> = batch
        .iter()
        .enumerate()
        .map(|(pos, &idx)| (idx, batch_seeds.derive_idx(pos as u64).seed()))
        .collect();

    let threads = cfg.threads.max(1).min(jobs.len());
    let chunk = jobs.len().div_ceil(threads);
    let model_ref: &FusionModel<f32> = model;
    type ExampleGrad = (f64, Vec<Option<Vec<f32>>>);
    let results: Vec<Result<Vec<(usize, ExampleGrad)>>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (t, piece) in jobs.chunks(chunk).enumerate() {
            let base = t * chunk;
            handles.push(scope.spawn(move || {
                let mut local = Vec::with_capacity(piece.len());
                for (off, &(idx, seed)) in piece.iter().enumerate() {
                    let ex = &data[idx];
                    let lg = model_ref.loss_and_grads(&ex.inputs, ex.label, seed)?;
                    local.push((base + off, lg));
                }
                Ok(local)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });

    // Reduce in batch position order: deterministic under any thread count.
    let mut ordered: Vec<Option<ExampleGrad>> = (0..jobs.len()).map(|_| None).collect();
    for res in results {
        for (pos, lg) in res? {
            ordered[pos] = Some(lg);
        }
    }

    let inv_b = 1.0f32 / jobs.len() as f32;
    let mut loss_sum = 0.0f64;
    let mut acc: Vec<Option<Vec<f32>>> = (0..model.params.len()).map(|_| None).collect();
    for slot in ordered {
        let (loss, grads) = slot.expect("every batch slot filled");
        loss_sum += loss;
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                match &mut acc[i] {
                    Some(a) => {
                        for (av, gv) in a.iter_mut().zip(&g) {
                            *av += *gv;
                        }
                    }
                    None => acc[i] = Some(g),
                }
            }
        }
    }
    for a in acc.iter_mut().flatten() {
        for v in a.iter_mut() {
            *v *= inv_b;
        }
    }

    adam_step(&mut model.params, &acc, adam)?;
    Ok(loss_sum / jobs.len() as f64)
}
