//! Verify the analytic gradients of the full fused model against central
//! finite differences on a tiny f64 instance.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use ser_fusion::model::{tiny_inputs, FusionModel, Mode, ModelConfig};
use ser_fusion::numerics::gradcheck::{central_diff, max_rel_err};

fn main() -> Result<(), ser_fusion::SerError> {
    let mut cfg = ModelConfig::tiny();
    cfg.fusion.dropout = 0.0;
    let model = FusionModel::<f64>::new(cfg.clone(), 1)?;
    let inputs = tiny_inputs(1);
    let label = 1;

    let (loss, grads) = model.loss_and_grads_with_mode(&inputs, label, &Mode::Infer)?;
    println!("tiny model: {} parameters, loss {loss:.6}", model.params.total_elements());

    let mut analytic = Vec::new();
    for (id, g) in model.params.ids().zip(&grads) {
        match g {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat_n(0.0, model.params.get(id).numel())),
        }
    }

    let theta = model.params.flatten_f64();
    let numeric = central_diff(
        |v| {
            let mut m = FusionModel::<f64>::new(cfg.clone(), 0).expect("tiny config builds");
            m.params.set_from_f64(v).expect("same layout");
            m.eval_loss(&inputs, label).expect("forward evaluates")
        },
        &theta,
        1e-5,
    );

    let err = max_rel_err(&analytic, &numeric);
    println!("max relative error vs central differences: {err:.3e}");
    assert!(err < 1e-4);
    println!("gradients verified.");
    Ok(())
}
