//! Save a model checkpoint, reload it, and inspect its contents.
//!
//! ```bash
//! cargo run --example checkpoint_roundtrip
//! ```

use ser_fusion::cli::cmd_inspect_checkpoint;
use ser_fusion::model::{tiny_inputs, FusionModel, ModelConfig};
use ser_fusion::numerics::save_checkpoint;

fn main() -> Result<(), ser_fusion::SerError> {
    let path = std::env::temp_dir().join("ser-fusion-example.ckpt");
    let cfg = ModelConfig::tiny();
    let model = FusionModel::<f32>::new(cfg.clone(), 99)?;
    save_checkpoint(&path, &model.params, serde_json::to_value(&cfg)?, "example-hash")?;
    println!("wrote {}", path.display());

    let restored = FusionModel::from_checkpoint(&path)?;
    let inputs = tiny_inputs(0);
    let a = model.predict_inputs(&inputs)?;
    let b = restored.predict_inputs(&inputs)?;
    assert_eq!(a.logits, b.logits, "round trip must be bit-exact");
    println!("prediction after round trip matches: logit {:.6}", a.logits[0]);

    let info = cmd_inspect_checkpoint(&path)?;
    println!("{} parameters in {} tensors:", info.total_params, info.params.len());
    for p in info.params.iter().take(6) {
        println!("  {:<24} {:?} {}", p.name, p.shape, p.checksum);
    }
    println!("  ...");
    Ok(())
}
