//! Attention building blocks: multi-head scaled dot-product attention,
//! a post-norm residual attention block (used by the fusion stage), and
//! the pre-norm transformer encoder block (used by the encoder trunks).

use crate::error::Result;
use crate::numerics::{NodeId, ParamId, ParamStore, Real, Tape, Tensor};
use crate::seed::SeedStream;

pub const LN_EPS: f64 = 1e-5;

/// `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct LinearP {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_in: usize,
        d_out: usize,
        seeds: &SeedStream,
    ) -> Self {
        LinearP {
            w: params.add_uniform(&format!("{name}.w"), vec![d_in, d_out], d_in, seeds),
            b: params.add_zeros(&format!("{name}.b"), vec![d_out]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNormP {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormP {
    pub fn build<R: Real>(params: &mut ParamStore<R>, name: &str, d: usize) -> Self {
        LayerNormP {
            gamma: params.add_const(&format!("{name}.gamma"), vec![d], 1.0),
            beta: params.add_zeros(&format!("{name}.beta"), vec![d]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MhaP {
    pub wq: LinearP,
    pub wk: LinearP,
    pub wv: LinearP,
    pub wo: LinearP,
    pub heads: usize,
    pub d_model: usize,
}

impl MhaP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_model: usize,
        heads: usize,
        seeds: &SeedStream,
    ) -> Self {
        assert!(
            d_model.is_multiple_of(heads),
            "d_model {d_model} not divisible by {heads} heads"
        );
        MhaP {
            wq: LinearP::build(params, &format!("{name}.wq"), d_model, d_model, seeds),
            wk: LinearP::build(params, &format!("{name}.wk"), d_model, d_model, seeds),
            wv: LinearP::build(params, &format!("{name}.wv"), d_model, d_model, seeds),
            wo: LinearP::build(params, &format!("{name}.wo"), d_model, d_model, seeds),
            heads,
            d_model,
        }
    }
}

/// Post-norm residual attention block: `LN(x + MHA(...))`.
#[derive(Debug, Clone, Copy)]
pub struct AttnBlockP {
    pub mha: MhaP,
    pub ln: LayerNormP,
}

impl AttnBlockP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_model: usize,
        heads: usize,
        seeds: &SeedStream,
    ) -> Self {
        AttnBlockP {
            mha: MhaP::build(params, &format!("{name}.mha"), d_model, heads, seeds),
            ln: LayerNormP::build(params, &format!("{name}.ln"), d_model),
        }
    }
}

/// Pre-norm transformer encoder block.
#[derive(Debug, Clone, Copy)]
pub struct EncoderBlockP {
    pub ln1: LayerNormP,
    pub mha: MhaP,
    pub ln2: LayerNormP,
    pub ffn1: LinearP,
    pub ffn2: LinearP,
}

impl EncoderBlockP {
    pub fn build<R: Real>(
        params: &mut ParamStore<R>,
        name: &str,
        d_model: usize,
        heads: usize,
        ffn_width: usize,
        seeds: &SeedStream,
    ) -> Self {
        EncoderBlockP {
            ln1: LayerNormP::build(params, &format!("{name}.ln1"), d_model),
            mha: MhaP::build(params, &format!("{name}.mha"), d_model, heads, seeds),
            ln2: LayerNormP::build(params, &format!("{name}.ln2"), d_model),
            ffn1: LinearP::build(params, &format!("{name}.ffn1"), d_model, ffn_width, seeds),
            ffn2: LinearP::build(params, &format!("{name}.ffn2"), ffn_width, d_model, seeds),
        }
    }
}

/// Forward-pass context: the tape plus the param-id -> node-id lease.
pub struct Ctx<'a, R: Real> {
    pub tape: &'a mut Tape<R>,
    pub lease: &'a [NodeId],
}

impl<'a, R: Real> Ctx<'a, R> {
    pub fn p(&self, id: ParamId) -> NodeId {
        self.lease[id.0]
    }

    pub fn linear(&mut self, x: NodeId, lin: &LinearP) -> Result<NodeId> {
        let h = self.tape.matmul(x, self.p(lin.w))?;
        self.tape.add_row(h, self.p(lin.b))
    }

    pub fn layer_norm_affine(&mut self, x: NodeId, ln: &LayerNormP) -> Result<NodeId> {
        let normed = self.tape.layer_norm(x, R::from_f64(LN_EPS));
        let scaled = self.tape.mul_row(normed, self.p(ln.gamma))?;
        self.tape.add_row(scaled, self.p(ln.beta))
    }

    /// Multi-head scaled dot-product attention. Queries come from
    /// `q_seq`, keys and values from `kv_seq`. Returns the output and the
    /// per-head attention-weight nodes (softmax outputs, rows = queries).
    pub fn mha(
        &mut self,
        q_seq: NodeId,
        kv_seq: NodeId,
        p: &MhaP,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let d_head = p.d_model / p.heads;
        let q = self.linear(q_seq, &p.wq)?;
        let k = self.linear(kv_seq, &p.wk)?;
        let v = self.linear(kv_seq, &p.wv)?;
        let scale = R::from_f64(1.0 / (d_head as f64).sqrt());

        let mut head_outs = Vec::with_capacity(p.heads);
        let mut probes = Vec::with_capacity(p.heads);
        for h in 0..p.heads {
            let (lo, hi) = (h * d_head, (h + 1) * d_head);
            let qh = self.tape.slice_cols(q, lo, hi)?;
            let kh = self.tape.slice_cols(k, lo, hi)?;
            let vh = self.tape.slice_cols(v, lo, hi)?;
            let scores = self.tape.matmul_nt(qh, kh)?;
            let scaled = self.tape.scale(scores, scale);
            let weights = self.tape.softmax(scaled, 1)?;
            probes.push(weights);
            head_outs.push(self.tape.matmul(weights, vh)?);
        }
        let concat = self.tape.concat_cols(&head_outs)?;
        let out = self.linear(concat, &p.wo)?;
        Ok((out, probes))
    }

    /// `LN(x + MHA(q=x or q, kv))`, or the bare attention output when
    /// `residual_norm` is off.
    pub fn attn_block(
        &mut self,
        q_seq: NodeId,
        kv_seq: NodeId,
        p: &AttnBlockP,
        residual_norm: bool,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let (attn, probes) = self.mha(q_seq, kv_seq, &p.mha)?;
        if !residual_norm {
            return Ok((attn, probes));
        }
        let res = self.tape.add(q_seq, attn)?;
        let out = self.layer_norm_affine(res, &p.ln)?;
        Ok((out, probes))
    }

    /// Pre-norm encoder block: `x + MHA(LN1(x))`, then `h + FFN(LN2(h))`.
    pub fn encoder_block(&mut self, x: NodeId, p: &EncoderBlockP) -> Result<(NodeId, Vec<NodeId>)> {
        let normed = self.layer_norm_affine(x, &p.ln1)?;
        let (attn, probes) = self.mha(normed, normed, &p.mha)?;
        let h = self.tape.add(x, attn)?;

        let normed2 = self.layer_norm_affine(h, &p.ln2)?;
        let f1 = self.linear(normed2, &p.ffn1)?;
        let act = self.tape.tanh(f1);
        let f2 = self.linear(act, &p.ffn2)?;
        let out = self.tape.add(h, f2)?;
        Ok((out, probes))
    }
}

/// Sinusoidal positional encoding, `[t, d]`.
pub fn positional_encoding<R: Real>(t: usize, d: usize) -> Tensor<R> {
    let mut data = Vec::with_capacity(t * d);
    for pos in 0..t {
        for i in 0..d {
            let exponent = 2.0 * (i / 2) as f64 / d as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            data.push(R::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor { shape: vec![t, d], data }
}
