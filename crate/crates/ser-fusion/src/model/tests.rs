use super::*;
use crate::model::attention::Ctx;
use crate::numerics::gradcheck::{central_diff, max_rel_err};
use crate::numerics::{adam_step, AdamConfig, AdamState};

fn tiny_model(seed: u64) -> FusionModel<f64> {
    let mut cfg = ModelConfig::tiny();
    cfg.fusion.dropout = 0.0;
    FusionModel::new(cfg, seed).unwrap()
}

#[test]
fn default_encoders_produce_matched_500_frame_sequences() {
    let cfg = ModelConfig::default();
    let seeds = SeedStream::new(1).derive("init");
    let mut params = ParamStore::<f32>::new();
    let enc = EncoderP::build(&mut params, "deep", &cfg.deep, 1, &seeds).unwrap();

    let mut tape = Tape::new();
    let lease = params.lease(&mut tape);
    let wave = tape.leaf(Tensor::new(vec![160_000, 1], vec![0.01f32; 160_000]).unwrap(), false);
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let (out, _) = enc.forward(&mut ctx, wave).unwrap();
    assert_eq!(tape.value(out).shape, vec![500, 64]);
}

#[test]
fn pitch_encoder_default_maps_contour_to_500_by_64() {
    let cfg = ModelConfig::default();
    let seeds = SeedStream::new(1).derive("init");
    let mut params = ParamStore::<f32>::new();
    let enc = EncoderP::build(&mut params, "pitch_enc", &cfg.pitch, 1, &seeds).unwrap();

    let mut tape = Tape::new();
    let lease = params.lease(&mut tape);
    let contour = tape.leaf(Tensor::new(vec![1001, 1], vec![0.3f32; 1001]).unwrap(), false);
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let (out, _) = enc.forward(&mut ctx, contour).unwrap();
    assert_eq!(tape.value(out).shape, vec![500, 64]);
}

#[test]
fn mfcc_encoder_pools_1001_frames_to_a_64_vector() {
    use crate::model::lstm::{bilstm_avg, BiLstmP};
    let seeds = SeedStream::new(2).derive("init");
    let mut params = ParamStore::<f32>::new();
    let lstm = BiLstmP::build(&mut params, "mfcc.lstm", 39, 32, &seeds);

    let mut tape = Tape::new();
    let lease = params.lease(&mut tape);
    let x = tape.leaf(
        Tensor::new(
            vec![1001, 39],
            (0..1001 * 39).map(|i| ((i as f32) * 0.01).sin() * 0.5).collect(),
        )
        .unwrap(),
        false,
    );
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let pooled = bilstm_avg(&mut ctx, x, &lstm).unwrap();
    assert_eq!(tape.value(pooled).shape, vec![1, 64]);
    assert!(tape.value(pooled).data.iter().all(|v| v.is_finite()));
}

#[test]
fn prediction_is_deterministic_and_batch_independent() {
    let model = tiny_model(3);
    let a = tiny_inputs(1);
    let b = tiny_inputs(2);

    let pa1 = model.predict_inputs(&a).unwrap();
    let pb1 = model.predict_inputs(&b).unwrap();
    // Reverse "batch order".
    let pb2 = model.predict_inputs(&b).unwrap();
    let pa2 = model.predict_inputs(&a).unwrap();

    assert_eq!(pa1.logits, pa2.logits);
    assert_eq!(pb1.logits, pb2.logits);
    assert!(pa1.probs[0] >= 0.0 && pa1.probs[0] <= 1.0);
}

#[test]
fn identical_sequences_fuse_into_identical_halves() {
    // Shared cross-attention weights mean both directions coincide when
    // f_w == f_p'.
    let model = tiny_model(4);
    let cross = model.layout.cross.as_ref().unwrap();
    let mut tape = Tape::new();
    let lease = model.params.lease(&mut tape);
    let x = tape.leaf(
        Tensor::new(vec![6, 8], (0..48).map(|i| ((i as f64) * 0.23).sin()).collect()).unwrap(),
        false,
    );
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let (w2p, _) = ctx.attn_block(x, x, cross, true).unwrap();
    let (p2w, _) = ctx.attn_block(x, x, cross, true).unwrap();
    let both = ctx.tape.concat_cols(&[w2p, p2w]).unwrap();
    let pooled = ctx.tape.mean_rows(both);
    let v = tape.value(pooled);
    let (first, second) = v.data.split_at(8);
    assert_eq!(first, second);
}

#[test]
fn zeroed_value_and_output_projections_isolate_the_residual_path() {
    let mut model = tiny_model(5);
    for name in [
        "fusion.cross.mha.wv.w",
        "fusion.cross.mha.wv.b",
        "fusion.cross.mha.wo.w",
        "fusion.cross.mha.wo.b",
    ] {
        let id = model.params.by_name(name).unwrap();
        let t = model.params.get_mut(id);
        t.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let cross = model.layout.cross.as_ref().unwrap();

    let mut tape = Tape::new();
    let lease = model.params.lease(&mut tape);
    let f_w = Tensor::new(vec![6, 8], (0..48).map(|i| ((i as f64) * 0.37).cos()).collect()).unwrap();
    let f_p = Tensor::new(vec![6, 8], (0..48).map(|i| ((i as f64) * 0.11).sin()).collect()).unwrap();
    let w = tape.leaf(f_w.clone(), false);
    let p = tape.leaf(f_p.clone(), false);
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let (w2p, _) = ctx.attn_block(w, p, cross, true).unwrap();
    let (p2w, _) = ctx.attn_block(p, w, cross, true).unwrap();
    let both = ctx.tape.concat_cols(&[w2p, p2w]).unwrap();
    let pooled = ctx.tape.mean_rows(both);

    // Independent route: with zero V/O the block is LN(q + 0) with unit
    // gamma / zero beta, i.e. plain row-wise layer norm; AVP by hand.
    let ln_rows = |t: &Tensor<f64>| -> Vec<Vec<f64>> {
        (0..t.rows())
            .map(|r| {
                let row = t.row(r);
                let n = row.len() as f64;
                let mu = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                let inv = 1.0 / (var + 1e-5).sqrt();
                row.iter().map(|v| (v - mu) * inv).collect()
            })
            .collect()
    };
    let (lw, lp) = (ln_rows(&f_w), ln_rows(&f_p));
    let mut want = vec![0.0f64; 16];
    for r in 0..6 {
        for c in 0..8 {
            want[c] += lw[r][c] / 6.0;
            want[8 + c] += lp[r][c] / 6.0;
        }
    }
    for (got, want) in tape.value(pooled).data.iter().zip(&want) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn default_fusion_dimensions_match_contract() {
    // 2 tokens at d_model 64 -> 128-vector into the classifier.
    let cfg = ModelConfig::default();
    assert_eq!(cfg.classifier_in_dim(), 128);
    let vanilla = ModelConfig {
        fusion: FusionConfig { ablation: Ablation::Vanilla, ..cfg.fusion.clone() },
        ..cfg.clone()
    };
    // Flat concat: 128 (wav+pitch) + 64 (mfcc).
    assert_eq!(vanilla.classifier_in_dim(), 192);
}

#[test]
fn self_attention_tokens_mirror_part_symmetries() {
    let model = tiny_model(6);
    let self_attn = model.layout.self_attn.as_ref().unwrap();
    let mut tape = Tape::new();
    let lease = model.params.lease(&mut tape);

    // Identical tokens attend identically.
    let tok = Tensor::new(vec![1, 8], (0..8).map(|i| i as f64 * 0.1).collect()).unwrap();
    let t1 = tape.leaf(tok.clone(), false);
    let t2 = tape.leaf(tok, false);
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let seq = ctx.tape.stack_rows(&[t1, t2]).unwrap();
    let (out, _) = ctx.attn_block(seq, seq, self_attn, true).unwrap();
    let v = tape.value(out);
    assert_eq!(v.row(0), v.row(1));

    // Swapping distinct tokens permutes the outputs.
    let a = Tensor::new(vec![1, 8], (0..8).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
    let b = Tensor::new(vec![1, 8], (0..8).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
    let (na, nb) = (tape.leaf(a, false), tape.leaf(b, false));
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let ab = ctx.tape.stack_rows(&[na, nb]).unwrap();
    let (out_ab, _) = ctx.attn_block(ab, ab, self_attn, true).unwrap();
    let mut ctx = Ctx { tape: &mut tape, lease: &lease };
    let ba = ctx.tape.stack_rows(&[nb, na]).unwrap();
    let (out_ba, _) = ctx.attn_block(ba, ba, self_attn, true).unwrap();

    let (vab, vba) = (tape.value(out_ab), tape.value(out_ba));
    for c in 0..8 {
        assert!((vab.row(0)[c] - vba.row(1)[c]).abs() < 1e-6);
        assert!((vab.row(1)[c] - vba.row(0)[c]).abs() < 1e-6);
    }
}

#[test]
fn fusion_attention_rows_sum_to_one_in_the_full_graph() {
    let model = tiny_model(7);
    let inputs = tiny_inputs(3);
    let mut tape = Tape::new();
    let lease = model.params.lease(&mut tape);
    let out = model
        .build_graph(&mut tape, &lease, &inputs, &Mode::Infer)
        .unwrap();
    assert!(!out.fusion_probes.is_empty());
    for p in out.fusion_probes.iter().chain(&out.encoder_probes) {
        let w = tape.value(*p);
        for r in 0..w.rows() {
            let sum: f64 = w.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
        }
    }
}

#[test]
fn single_feature_configs_reduce_to_encoder_plus_classifier() {
    let mut cfg = ModelConfig::tiny();
    cfg.fusion.feature_set = FeatureSet::single("deep").unwrap();
    cfg.fusion.dropout = 0.0;
    let model = FusionModel::<f64>::new(cfg, 11).unwrap();

    for (name, _) in model.params.iter() {
        assert!(
            !name.starts_with("pitch_enc") && !name.starts_with("mfcc") && !name.starts_with("fusion.cross"),
            "unexpected parameter {name}"
        );
    }
    let inputs = SegmentInputs { wave: tiny_inputs(4).wave, mfcc: None, pitch_std: None };
    let pred = model.predict_inputs(&inputs).unwrap();
    assert!(pred.probs[0] > 0.0 && pred.probs[0] < 1.0);
}

#[test]
fn vanilla_ablation_gives_no_gradients_to_fusion_attention() {
    let mut cfg = ModelConfig::tiny();
    cfg.fusion.ablation = Ablation::Vanilla;
    cfg.fusion.dropout = 0.0;
    let model = FusionModel::<f64>::new(cfg, 12).unwrap();
    let inputs = tiny_inputs(5);
    let (_, grads) = model.loss_and_grads(&inputs, 1, 9).unwrap();
    for (id, g) in model.params.ids().zip(&grads) {
        let name = model.params.name(id);
        if name.starts_with("fusion.") {
            assert!(g.is_none(), "{name} received a gradient under vanilla");
        } else {
            assert!(g.is_some(), "{name} missing a gradient");
        }
    }
}

#[test]
fn full_model_loss_is_finite_and_probability_in_range() {
    let model = tiny_model(13);
    let inputs = tiny_inputs(6);
    let pred = model.predict_inputs(&inputs).unwrap();
    assert!(pred.probs[0] >= 0.0 && pred.probs[0] <= 1.0);
    let (loss, _) = model.loss_and_grads(&inputs, 0, 1).unwrap();
    assert!(loss.is_finite());
}

#[test]
fn every_parameter_receives_gradient_somewhere() {
    // Statistical reachability: across a few random inputs, each
    // parameter's accumulated |grad| must be nonzero.
    let model = tiny_model(14);
    let mut acc = vec![0.0f64; model.params.len()];
    for seed in 0..4u64 {
        let inputs = tiny_inputs(100 + seed);
        let (_, grads) = model
            .loss_and_grads_with_mode(&inputs, (seed % 2) as usize, &Mode::Infer)
            .unwrap();
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                acc[i] += g.iter().map(|v| v.abs()).sum::<f64>();
            }
        }
    }
    for (id, &a) in model.params.ids().zip(&acc) {
        assert!(a > 0.0, "parameter {} never received gradient", model.params.name(id));
    }
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let model = tiny_model(15);
    let inputs = tiny_inputs(7);
    let label = 1usize;

    let (_, grads) = model
        .loss_and_grads_with_mode(&inputs, label, &Mode::Infer)
        .unwrap();
    let mut analytic = Vec::new();
    for (id, g) in model.params.ids().zip(&grads) {
        let n = model.params.get(id).numel();
        match g {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat_n(0.0, n)),
        }
    }

    let theta = model.params.flatten_f64();
    let cfg = model.cfg.clone();
    let numeric = central_diff(
        |v| {
            let mut m = FusionModel::<f64>::new(cfg.clone(), 0).unwrap();
            m.params.set_from_f64(v).unwrap();
            m.eval_loss(&inputs, label).unwrap()
        },
        &theta,
        1e-5,
    );
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn one_adam_step_descends_on_most_seeds() {
    let mut passes = 0;
    for seed in 0..20u64 {
        let mut model = tiny_model(200 + seed);
        let inputs = tiny_inputs(300 + seed);
        let label = (seed % 2) as usize;
        let before = model.eval_loss(&inputs, label).unwrap();
        let (_, grads) = model
            .loss_and_grads_with_mode(&inputs, label, &Mode::Infer)
            .unwrap();
        let mut state = AdamState::new(
            AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            &model.params,
        )
        .unwrap();
        adam_step(&mut model.params, &grads, &mut state).unwrap();
        let after = model.eval_loss(&inputs, label).unwrap();
        if after < before {
            passes += 1;
        }
    }
    assert!(passes >= 18, "descent on only {passes}/20 seeds");
}

#[test]
fn checkpoint_round_trip_preserves_predictions_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut cfg = ModelConfig::tiny();
    cfg.fusion.dropout = 0.0;
    let model = FusionModel::<f32>::new(cfg.clone(), 21).unwrap();
    crate::numerics::save_checkpoint(
        &path,
        &model.params,
        serde_json::to_value(&cfg).unwrap(),
        "hash",
    )
    .unwrap();

    let restored = FusionModel::from_checkpoint(&path).unwrap();
    for ((n0, t0), (n1, t1)) in model.params.iter().zip(restored.params.iter()) {
        assert_eq!(n0, n1);
        let b0: Vec<u32> = t0.data.iter().map(|v| v.to_bits()).collect();
        let b1: Vec<u32> = t1.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(b0, b1, "parameter {n0} changed across round trip");
    }
    let inputs = tiny_inputs(8);
    let p0 = model.predict_inputs(&inputs).unwrap();
    let p1 = restored.predict_inputs(&inputs).unwrap();
    assert_eq!(p0.logits, p1.logits);
}

#[test]
fn every_table_row_config_is_constructible() {
    // Feature rows x attention rows: all 16 combinations build and run.
    let feature_sets = [
        FeatureSet::single("deep").unwrap(),
        FeatureSet::single("pitch").unwrap(),
        FeatureSet::single("mfcc").unwrap(),
        FeatureSet::ALL,
    ];
    for fs in feature_sets {
        for ab in Ablation::ALL {
            let mut cfg = ModelConfig::tiny();
            cfg.fusion.feature_set = fs;
            cfg.fusion.ablation = ab;
            cfg.fusion.dropout = 0.0;
            let model = FusionModel::<f64>::new(cfg, 31).unwrap();
            let full = tiny_inputs(9);
            let inputs = SegmentInputs {
                wave: full.wave.clone(),
                mfcc: if fs.mfcc { full.mfcc.clone() } else { None },
                pitch_std: if fs.pitch { full.pitch_std.clone() } else { None },
            };
            let pred = model.predict_inputs(&inputs).unwrap();
            assert!(pred.probs[0].is_finite(), "{fs:?}/{ab:?}");
        }
    }
}
