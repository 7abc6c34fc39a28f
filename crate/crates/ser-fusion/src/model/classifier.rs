//! Classification head: dropout -> FC -> tanh -> dropout -> FC -> logits,
//! with sigmoid (binary) or softmax (multi-class) probabilities and the
//! matching logit-space losses.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::model::attention::{Ctx, LinearP};
use crate::numerics::{NodeId, ParamStore, Real};
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy)]
pub struct ClassifierP {
    pub fc1: LinearP,
    pub fc2: LinearP,
    pub dropout: f64,
    pub n_classes: usize,
}

impl ClassifierP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_in: usize,
        hidden: usize,
        n_classes: usize,
        dropout: f64,
        seeds: &SeedStream,
    ) -> Self {
        // Binary classification uses a single logit.
        let out = if n_classes <= 2 { 1 } else { n_classes };
        ClassifierP {
            fc1: LinearP::build(params, &format!("{name}.fc1"), d_in, hidden, seeds),
            fc2: LinearP::build(params, &format!("{name}.fc2"), hidden, out, seeds),
            dropout,
            n_classes,
        }
    }
}

/// Dropout seeding for one forward pass: each dropout site draws the next
/// derived seed so masks stay independent and reproducible.
pub enum Mode {
    Infer,
    Train { dropout_seed: SeedStream },
}

impl Mode {
    pub fn train_from(seed: u64) -> Mode {
        Mode::Train { dropout_seed: SeedStream::new(seed).derive("dropout") }
    }

    fn is_training(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    fn seed_for(&self, site: usize) -> u64 {
        match self {
            Mode::Infer => 0,
            Mode::Train { dropout_seed } => dropout_seed.derive_idx(site as u64).seed(),
        }
    }
}

/// Logits of the head for a `[1, d_in]` feature vector.
pub fn classify_logits<R: Real>(
    ctx: &mut Ctx<'_, R>,
    features: NodeId,
    p: &ClassifierP,
    mode: &Mode,
) -> Result<NodeId> {
    let x = ctx
        .tape
        .dropout(features, p.dropout, mode.is_training(), mode.seed_for(0))?;
    let h = ctx.linear(x, &p.fc1)?;
    let a = ctx.tape.tanh(h);
    let a = ctx
        .tape
        .dropout(a, p.dropout, mode.is_training(), mode.seed_for(1))?;
    ctx.linear(a, &p.fc2)
}

/// Logits plus probabilities; binary tasks carry `p(negative)` as a
/// single-element distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: Vec<f32>,
    /// Binary: `[p_negative]`. Multi-class: softmax distribution.
    pub probs: Vec<f32>,
    pub n_classes: usize,
}

impl Prediction {
    pub fn from_logits(logits: Vec<f32>, n_classes: usize) -> Result<Self> {
        if n_classes <= 2 {
            if logits.len() != 1 {
                return Err(SerError::Shape(format!(
                    "binary prediction wants 1 logit, got {}",
                    logits.len()
                )));
            }
            let z = logits[0] as f64;
            let p = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
            Ok(Prediction { logits, probs: vec![p as f32], n_classes })
        } else {
            if logits.len() != n_classes {
                return Err(SerError::Shape(format!(
                    "{n_classes}-class prediction wants {n_classes} logits, got {}",
                    logits.len()
                )));
            }
            let mx = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let exps: Vec<f64> = logits.iter().map(|&z| ((z as f64) - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            Ok(Prediction {
                probs: exps.iter().map(|e| (e / sum) as f32).collect(),
                logits,
                n_classes,
            })
        }
    }

    /// Probability of the positive ("negative emotion") class.
    pub fn prob_negative(&self) -> f32 {
        if self.n_classes <= 2 {
            self.probs[0]
        } else {
            // By convention class 1 is the negative class in multi-class
            // layouts that still carry one; callers normally use argmax.
            self.probs.get(1).copied().unwrap_or(0.0)
        }
    }

    pub fn predicted_class(&self) -> usize {
        if self.n_classes <= 2 {
            usize::from(self.probs[0] > 0.5)
        } else {
            self.probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                .map(|(i, _)| i)
                .expect("non-empty probs")
        }
    }
}

/// Attach the loss node for a label to an existing logits node.
pub fn loss_node<R: Real>(
    tape: &mut crate::numerics::Tape<R>,
    logits: NodeId,
    label: usize,
    n_classes: usize,
) -> Result<NodeId> {
    if n_classes <= 2 {
        if label > 1 {
            return Err(SerError::Data(format!("binary label {label} out of range")));
        }
        tape.bce_with_logits(logits, label as f64)
    } else {
        if label >= n_classes {
            return Err(SerError::Data(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
        tape.cross_entropy_logits(logits, label)
    }
}
