//! LSTM cell and the bidirectional MFCC encoder.

use crate::error::Result;
use crate::model::attention::Ctx;
use crate::numerics::{NodeId, ParamId, ParamStore, Real};
use crate::seed::SeedStream;

/// One direction's cell parameters. Weights are `[in, 4h]` / `[h, 4h]`
/// with gate order i, f, g, o.
#[derive(Debug, Clone, Copy)]
pub struct LstmP {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_in: usize,
        hidden: usize,
        seeds: &SeedStream,
    ) -> Self {
        LstmP {
            w_ih: params.add_uniform(&format!("{name}.w_ih"), vec![d_in, 4 * hidden], d_in, seeds),
            w_hh: params.add_uniform(
                &format!("{name}.w_hh"),
                vec![hidden, 4 * hidden],
                hidden,
                seeds,
            ),
            bias: params.add_zeros(&format!("{name}.b"), vec![4 * hidden]),
            hidden,
        }
    }
}

/// One LSTM step: `(x_t, h, c) -> (h', c')` with
/// `c' = f.c + i.g` and `h' = o.tanh(c')`.
pub fn lstm_step<R: Real>(
    ctx: &mut Ctx<'_, R>,
    x_t: NodeId,
    h: NodeId,
    c: NodeId,
    p: &LstmP,
) -> Result<(NodeId, NodeId)> {
    let hd = p.hidden;
    let xw = ctx.tape.matmul(x_t, ctx.p(p.w_ih))?;
    let hw = ctx.tape.matmul(h, ctx.p(p.w_hh))?;
    let pre = ctx.tape.add(xw, hw)?;
    let gates = ctx.tape.add_row(pre, ctx.p(p.bias))?;

    let i_g = ctx.tape.slice_cols(gates, 0, hd)?;
    let f_g = ctx.tape.slice_cols(gates, hd, 2 * hd)?;
    let g_g = ctx.tape.slice_cols(gates, 2 * hd, 3 * hd)?;
    let o_g = ctx.tape.slice_cols(gates, 3 * hd, 4 * hd)?;

    let i = ctx.tape.sigmoid(i_g);
    let f = ctx.tape.sigmoid(f_g);
    let g = ctx.tape.tanh(g_g);
    let o = ctx.tape.sigmoid(o_g);

    let fc = ctx.tape.mul(f, c)?;
    let ig = ctx.tape.mul(i, g)?;
    let c_next = ctx.tape.add(fc, ig)?;
    let c_act = ctx.tape.tanh(c_next);
    let h_next = ctx.tape.mul(o, c_act)?;
    Ok((h_next, c_next))
}

/// Bidirectional single-layer LSTM encoder parameters.
#[derive(Debug, Clone, Copy)]
pub struct BiLstmP {
    pub fwd: LstmP,
    pub bwd: LstmP,
}

impl BiLstmP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_in: usize,
        hidden: usize,
        seeds: &SeedStream,
    ) -> Self {
        BiLstmP {
            fwd: LstmP::build(params, &format!("{name}.fwd"), d_in, hidden, seeds),
            bwd: LstmP::build(params, &format!("{name}.bwd"), d_in, hidden, seeds),
        }
    }
}

/// Run both directions over a `[t, d]` leaf and average the concatenated
/// per-frame states over time: output is `[1, 2*hidden]`.
pub fn bilstm_avg<R: Real>(ctx: &mut Ctx<'_, R>, input: NodeId, p: &BiLstmP) -> Result<NodeId> {
    let t = ctx.tape.value(input).rows();

    let run = |ctx: &mut Ctx<'_, R>, dir: &LstmP, reversed: bool| -> Result<Vec<NodeId>> {
        let mut h = ctx
            .tape
            .leaf(crate::numerics::Tensor::zeros(vec![1, dir.hidden]), false);
        let mut c = h;
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let idx = if reversed { t - 1 - step } else { step };
            let x_t = ctx.tape.slice_rows(input, idx, idx + 1)?;
            let (h2, c2) = lstm_step(ctx, x_t, h, c, dir)?;
            h = h2;
            c = c2;
            outs.push(h);
        }
        if reversed {
            outs.reverse();
        }
        Ok(outs)
    };

    let fwd = run(ctx, &p.fwd, false)?;
    let bwd = run(ctx, &p.bwd, true)?;
    let fwd_seq = ctx.tape.stack_rows(&fwd)?;
    let bwd_seq = ctx.tape.stack_rows(&bwd)?;
    let both = ctx.tape.concat_cols(&[fwd_seq, bwd_seq])?;
    Ok(ctx.tape.mean_rows(both))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    #[test]
    fn zero_weights_and_inputs_are_a_fixed_point() {
        let mut params = ParamStore::<f64>::new();
        let p = LstmP {
            w_ih: params.add_zeros("w_ih", vec![3, 8]),
            w_hh: params.add_zeros("w_hh", vec![2, 8]),
            bias: params.add_zeros("b", vec![8]),
            hidden: 2,
        };
        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let x = tape.leaf(Tensor::zeros(vec![1, 3]), false);
        let h = tape.leaf(Tensor::zeros(vec![1, 2]), false);
        let c = tape.leaf(Tensor::zeros(vec![1, 2]), false);
        let mut ctx = Ctx { tape: &mut tape, lease: &lease };
        let (h2, c2) = lstm_step(&mut ctx, x, h, c, &p).unwrap();
        assert_eq!(tape.value(h2).data, vec![0.0, 0.0]);
        assert_eq!(tape.value(c2).data, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_weight_bilstm_pools_to_zero_vector() {
        let mut params = ParamStore::<f64>::new();
        let p = BiLstmP {
            fwd: LstmP {
                w_ih: params.add_zeros("f.w_ih", vec![3, 8]),
                w_hh: params.add_zeros("f.w_hh", vec![2, 8]),
                bias: params.add_zeros("f.b", vec![8]),
                hidden: 2,
            },
            bwd: LstmP {
                w_ih: params.add_zeros("b.w_ih", vec![3, 8]),
                w_hh: params.add_zeros("b.w_hh", vec![2, 8]),
                bias: params.add_zeros("b.b", vec![8]),
                hidden: 2,
            },
        };
        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let x = tape.leaf(
            Tensor::new(vec![5, 3], (0..15).map(|i| i as f64).collect()).unwrap(),
            false,
        );
        let mut ctx = Ctx { tape: &mut tape, lease: &lease };
        let y = bilstm_avg(&mut ctx, x, &p).unwrap();
        assert_eq!(tape.value(y).shape, vec![1, 4]);
        assert!(tape.value(y).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_input_pooling_equals_single_frame_response() {
        // Memoryless configuration: zero recurrent weights and a forget
        // gate pinned shut (bias -30) make every frame of a constant
        // sequence produce the same state, so the time average equals a
        // single frame's output.
        let seeds = SeedStream::new(8);
        let mut params = ParamStore::<f64>::new();
        let mut p = BiLstmP::build(&mut params, "l", 3, 2, &seeds);
        let no_memory = |params: &mut ParamStore<f64>, tag: &str, dir: &mut LstmP| {
            dir.w_hh = params.add_zeros(&format!("{tag}.zhh"), vec![2, 8]);
            let mut bias = Tensor::zeros(vec![8]);
            for k in 2..4 {
                bias.data[k] = -30.0; // forget-gate section of [i f g o]
            }
            dir.bias = params.add(&format!("{tag}.bf"), bias);
        };
        no_memory(&mut params, "f", &mut p.fwd);
        no_memory(&mut params, "b", &mut p.bwd);

        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let x = tape.leaf(
            Tensor::new(vec![6, 3], [0.4, -0.2, 0.9].repeat(6)).unwrap(),
            false,
        );
        let mut ctx = Ctx { tape: &mut tape, lease: &lease };
        let pooled = bilstm_avg(&mut ctx, x, &p).unwrap();

        // Single-frame response of each direction on one constant row.
        let x1 = tape.slice_rows(x, 0, 1).unwrap();
        let h0 = tape.leaf(Tensor::zeros(vec![1, 2]), false);
        let c0 = tape.leaf(Tensor::zeros(vec![1, 2]), false);
        let mut ctx2 = Ctx { tape: &mut tape, lease: &lease };
        let (h_f, _) = lstm_step(&mut ctx2, x1, h0, c0, &p.fwd).unwrap();
        let mut ctx3 = Ctx { tape: &mut tape, lease: &lease };
        let (h_b, _) = lstm_step(&mut ctx3, x1, h0, c0, &p.bwd).unwrap();

        let want: Vec<f64> = tape
            .value(h_f)
            .data
            .iter()
            .chain(&tape.value(h_b).data)
            .copied()
            .collect();
        for (a, b) in tape.value(pooled).data.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
