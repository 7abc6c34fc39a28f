//! Reverse-mode differentiation over a dynamically recorded graph.
//!
//! Every op appends a node holding the forward value and the ids of its
//! inputs; ids only ever point backwards, so creation order is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! Gradient buffers for interior nodes are freed as soon as they have been
//! consumed; only leaves created with `requires_grad` keep their gradient.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SerError};
use crate::numerics::kernels;
use crate::numerics::real::{sigmoid, Real};
use crate::numerics::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op<R> {
    Leaf,
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, R),
    Tanh(NodeId),
    Sigmoid(NodeId),
    MatmulNn(NodeId, NodeId),
    MatmulNt(NodeId, NodeId),
    MatmulTn(NodeId, NodeId),
    Softmax { x: NodeId, axis: usize },
    LayerNorm { x: NodeId, eps: R },
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad_l: usize },
    Dropout { x: NodeId, mask: Vec<R> },
    MeanRows(NodeId),
    MeanAll(NodeId),
    SumAll(NodeId),
    SliceCols { x: NodeId, start: usize },
    SliceRows { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    Reshape(NodeId),
    BceWithLogits { logit: NodeId, target: R },
    CrossEntropyLogits { logits: NodeId, class: usize },
}

struct Node<R> {
    value: Tensor<R>,
    op: Op<R>,
    needs_grad: bool,
    grad: Option<Vec<R>>,
}

/// Recorded computation graph.
pub struct Tape<R> {
    nodes: Vec<Node<R>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<R> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. a `requires_grad` leaf.
    pub fn grad(&self, id: NodeId) -> Option<&[R]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn leaf(&mut self, value: Tensor<R>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op, needs_grad, grad: None });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].value.shape
    }

    // ── elementwise ────────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(SerError::Shape(format!(
                "add: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(SerError::Shape(format!(
                "sub: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data }, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(SerError::Shape(format!(
                "mul: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data }, Op::Mul(a, b), ng))
    }

    /// `x[t,d] + b[d]` with the vector broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.value(x).cols();
        if self.value(b).numel() != d {
            return Err(SerError::Shape(format!(
                "add_row: row width {d} vs vector {}",
                self.value(b).numel()
            )));
        }
        let rows = self.value(x).rows();
        let mut data = self.value(x).data.clone();
        for r in 0..rows {
            for (v, &bv) in data[r * d..(r + 1) * d].iter_mut().zip(&self.value(b).data) {
                *v += bv;
            }
        }
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(Tensor { shape, data }, Op::AddRow(x, b), ng))
    }

    /// `x[t,d] * g[d]` with the vector broadcast over rows.
    pub fn mul_row(&mut self, x: NodeId, g: NodeId) -> Result<NodeId> {
        let d = self.value(x).cols();
        if self.value(g).numel() != d {
            return Err(SerError::Shape(format!(
                "mul_row: row width {d} vs vector {}",
                self.value(g).numel()
            )));
        }
        let rows = self.value(x).rows();
        let mut data = self.value(x).data.clone();
        for r in 0..rows {
            for (v, &gv) in data[r * d..(r + 1) * d].iter_mut().zip(&self.value(g).data) {
                *v *= gv;
            }
        }
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x) || self.needs(g);
        Ok(self.push(Tensor { shape, data }, Op::MulRow(x, g), ng))
    }

    pub fn scale(&mut self, x: NodeId, c: R) -> NodeId {
        let data = self.value(x).data.iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x);
        self.push(Tensor { shape, data }, Op::Scale(x, c), ng)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data.iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x);
        self.push(Tensor { shape, data }, Op::Tanh(x), ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data.iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x);
        self.push(Tensor { shape, data }, Op::Sigmoid(x), ng)
    }

    // ── matrix products ────────────────────────────────────────────

    fn mat_dims(&self, id: NodeId) -> Result<(usize, usize)> {
        let s = self.shape(id);
        match s.len() {
            1 => Ok((1, s[0])),
            2 => Ok((s[0], s[1])),
            _ => Err(SerError::Shape(format!("matmul wants rank <= 2, got {s:?}"))),
        }
    }

    /// a[m,k] * b[k,n]
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.mat_dims(a)?;
        let (k2, n) = self.mat_dims(b)?;
        if k != k2 {
            return Err(SerError::Shape(format!(
                "matmul: inner dims {k} vs {k2}"
            )));
        }
        let mut data = vec![R::ZERO; m * n];
        kernels::matmul_nn_acc(&self.value(a).data, &self.value(b).data, &mut data, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatmulNn(a, b), ng))
    }

    /// a[m,k] * b[n,k]^T
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.mat_dims(a)?;
        let (n, k2) = self.mat_dims(b)?;
        if k != k2 {
            return Err(SerError::Shape(format!(
                "matmul_nt: inner dims {k} vs {k2}"
            )));
        }
        let mut data = vec![R::ZERO; m * n];
        kernels::matmul_nt_acc(&self.value(a).data, &self.value(b).data, &mut data, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatmulNt(a, b), ng))
    }

    /// a[k,m]^T * b[k,n]
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (k, m) = self.mat_dims(a)?;
        let (k2, n) = self.mat_dims(b)?;
        if k != k2 {
            return Err(SerError::Shape(format!(
                "matmul_tn: inner dims {k} vs {k2}"
            )));
        }
        let mut data = vec![R::ZERO; m * n];
        kernels::matmul_tn_acc(&self.value(a).data, &self.value(b).data, &mut data, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatmulTn(a, b), ng))
    }

    // ── normalization & attention pieces ───────────────────────────

    /// Stable softmax along `axis` of a rank-1 or rank-2 tensor.
    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(SerError::Shape(format!(
                "softmax: axis {axis} out of range for {shape:?}"
            )));
        }
        let mut data = self.value(x).data.clone();
        match (shape.len(), axis) {
            (1, 0) => kernels::softmax_slice(&mut data),
            (2, 1) => {
                let d = shape[1];
                for r in 0..shape[0] {
                    kernels::softmax_slice(&mut data[r * d..(r + 1) * d]);
                }
            }
            (2, 0) => {
                let (rows, cols) = (shape[0], shape[1]);
                let mut col = vec![R::ZERO; rows];
                for c in 0..cols {
                    for r in 0..rows {
                        col[r] = data[r * cols + c];
                    }
                    kernels::softmax_slice(&mut col);
                    for r in 0..rows {
                        data[r * cols + c] = col[r];
                    }
                }
            }
            _ => unreachable!(),
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor { shape, data }, Op::Softmax { x, axis }, ng))
    }

    /// Zero-mean unit-variance normalization over the last axis.
    pub fn layer_norm(&mut self, x: NodeId, eps: R) -> NodeId {
        let shape = self.shape(x).to_vec();
        let d = self.value(x).cols();
        let rows = self.value(x).numel() / d;
        let xv = &self.value(x).data;
        let mut data = vec![R::ZERO; xv.len()];
        let n = R::from_f64(d as f64);
        for r in 0..rows {
            let xs = &xv[r * d..(r + 1) * d];
            let mut mu = R::ZERO;
            for &v in xs {
                mu += v;
            }
            mu = mu / n;
            let mut var = R::ZERO;
            for &v in xs {
                var += (v - mu) * (v - mu);
            }
            var = var / n;
            let inv = R::ONE / (var + eps).sqrt();
            for (o, &v) in data[r * d..(r + 1) * d].iter_mut().zip(xs) {
                *o = (v - mu) * inv;
            }
        }
        let ng = self.needs(x);
        self.push(Tensor { shape, data }, Op::LayerNorm { x, eps }, ng)
    }

    /// Strided 1-D convolution; see `kernels::conv1d_fwd` for the layout.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: (usize, usize),
    ) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 3 {
            return Err(SerError::Shape(format!(
                "conv1d: x {xs:?} (want [t,c_in]), w {ws:?} (want [c_out,k,c_in])"
            )));
        }
        let (t_in, c_in) = (xs[0], xs[1]);
        let (c_out, kernel, w_cin) = (ws[0], ws[1], ws[2]);
        if w_cin != c_in {
            return Err(SerError::Shape(format!(
                "conv1d: input channels {c_in} vs weight {w_cin}"
            )));
        }
        if stride == 0 {
            return Err(SerError::Shape("conv1d: stride must be positive".into()));
        }
        let padded = t_in + pad.0 + pad.1;
        if kernel == 0 || kernel > padded {
            return Err(SerError::Shape(format!(
                "conv1d: kernel {kernel} vs padded input {padded}"
            )));
        }
        if self.value(b).numel() != c_out {
            return Err(SerError::Shape(format!(
                "conv1d: bias {} vs c_out {c_out}",
                self.value(b).numel()
            )));
        }
        let t_out = (padded - kernel) / stride + 1;
        let mut data = vec![R::ZERO; t_out * c_out];
        kernels::conv1d_fwd(
            &self.value(x).data,
            &self.value(w).data,
            &self.value(b).data,
            &mut data,
            t_in,
            c_in,
            c_out,
            kernel,
            stride,
            pad.0,
        );
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(
            Tensor { shape: vec![t_out, c_out], data },
            Op::Conv1d { x, w, b, stride, pad_l: pad.0 },
            ng,
        ))
    }

    /// Inverted dropout: zero each element with probability `rate` and
    /// rescale survivors by `1/(1-rate)`. Identity when not training.
    pub fn dropout(&mut self, x: NodeId, rate: f64, training: bool, seed: u64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(SerError::Shape(format!("dropout: rate {rate} outside [0,1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = R::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<R> = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < rate { R::ZERO } else { keep })
            .collect();
        let data = self
            .value(x)
            .data
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x);
        Ok(self.push(Tensor { shape, data }, Op::Dropout { x, mask }, ng))
    }

    // ── reductions & reshaping ─────────────────────────────────────

    /// Average over the time axis: `[t,d] -> [1,d]`.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let d = self.value(x).cols();
        let rows = self.value(x).numel() / d;
        let inv = R::from_f64(1.0 / rows as f64);
        let mut data = vec![R::ZERO; d];
        for r in 0..rows {
            for (o, &v) in data.iter_mut().zip(self.value(x).row(r)) {
                *o += v;
            }
        }
        for v in data.iter_mut() {
            *v *= inv;
        }
        let ng = self.needs(x);
        self.push(Tensor { shape: vec![1, d], data }, Op::MeanRows(x), ng)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel();
        let mut s = R::ZERO;
        for &v in &self.value(x).data {
            s += v;
        }
        s = s / R::from_f64(n as f64);
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::MeanAll(x), ng)
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let mut s = R::ZERO;
        for &v in &self.value(x).data {
            s += v;
        }
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), ng)
    }

    /// Column block `[t, start..end)`.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let d = self.value(x).cols();
        if start >= end || end > d {
            return Err(SerError::Shape(format!(
                "slice_cols: [{start},{end}) of width {d}"
            )));
        }
        let rows = self.value(x).numel() / d;
        let w = end - start;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&self.value(x).row(r)[start..end]);
        }
        let ng = self.needs(x);
        Ok(self.push(
            Tensor { shape: vec![rows, w], data },
            Op::SliceCols { x, start },
            ng,
        ))
    }

    /// Row block `[start..end), d]`.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let d = self.value(x).cols();
        let rows = self.value(x).numel() / d;
        if start >= end || end > rows {
            return Err(SerError::Shape(format!(
                "slice_rows: [{start},{end}) of {rows} rows"
            )));
        }
        let data = self.value(x).data[start * d..end * d].to_vec();
        let ng = self.needs(x);
        Ok(self.push(
            Tensor { shape: vec![end - start, d], data },
            Op::SliceRows { x, start },
            ng,
        ))
    }

    /// Concatenate along the feature axis; all inputs share the row count.
    pub fn concat_cols(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(SerError::Shape("concat_cols: empty input list".into()));
        }
        let rows = self.value(xs[0]).rows();
        for &x in xs {
            if self.value(x).rows() != rows {
                return Err(SerError::Shape(format!(
                    "concat_cols: row mismatch {} vs {rows}",
                    self.value(x).rows()
                )));
            }
        }
        let total: usize = xs.iter().map(|&x| self.value(x).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(r));
            }
        }
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(
            Tensor { shape: vec![rows, total], data },
            Op::ConcatCols(xs.to_vec()),
            ng,
        ))
    }

    /// Stack equal-width inputs as consecutive rows (each input contributes
    /// all of its rows, in order).
    pub fn stack_rows(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(SerError::Shape("stack_rows: empty input list".into()));
        }
        let d = self.value(xs[0]).cols();
        let mut rows = 0;
        for &x in xs {
            if self.value(x).cols() != d {
                return Err(SerError::Shape(format!(
                    "stack_rows: width mismatch {} vs {d}",
                    self.value(x).cols()
                )));
            }
            rows += self.value(x).numel() / d;
        }
        let mut data = Vec::with_capacity(rows * d);
        for &x in xs {
            data.extend_from_slice(&self.value(x).data);
        }
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(
            Tensor { shape: vec![rows, d], data },
            Op::StackRows(xs.to_vec()),
            ng,
        ))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(SerError::Shape(format!(
                "reshape: {:?} -> {shape:?}",
                self.shape(x)
            )));
        }
        let data = self.value(x).data.clone();
        let ng = self.needs(x);
        Ok(self.push(Tensor { shape, data }, Op::Reshape(x), ng))
    }

    // ── losses ─────────────────────────────────────────────────────

    /// Binary cross-entropy computed from the logit in log-sum-exp form.
    pub fn bce_with_logits(&mut self, logit: NodeId, target: f64) -> Result<NodeId> {
        if !self.value(logit).is_scalar() {
            return Err(SerError::Shape(format!(
                "bce_with_logits: logit must be scalar, got {:?}",
                self.shape(logit)
            )));
        }
        if target != 0.0 && target != 1.0 {
            return Err(SerError::Data(format!("binary label must be 0 or 1, got {target}")));
        }
        let z = self.value(logit).data[0];
        let y = R::from_f64(target);
        // max(z,0) - z*y + ln(1 + exp(-|z|))
        let loss = z.maximum(R::ZERO) - z * y + (R::ONE + (-z.abs()).exp()).ln();
        let ng = self.needs(logit);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits { logit, target: y },
            ng,
        ))
    }

    /// Multi-class cross-entropy from logits: `logsumexp(z) - z[class]`.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, class: usize) -> Result<NodeId> {
        let n = self.value(logits).numel();
        if class >= n {
            return Err(SerError::Data(format!("class {class} out of range for {n} logits")));
        }
        let zs = &self.value(logits).data;
        let mut mx = zs[0];
        for &z in zs.iter() {
            mx = mx.maximum(z);
        }
        let mut sum = R::ZERO;
        for &z in zs.iter() {
            sum += (z - mx).exp();
        }
        let loss = sum.ln() + mx - zs[class];
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropyLogits { logits, class },
            ng,
        ))
    }

    // ── backward ───────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of `requires_grad`
    /// leaves are retained and readable via [`Tape::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(SerError::Shape(format!(
                "backward: loss must be scalar, got {:?}",
                self.shape(loss)
            )));
        }
        for node in self.nodes.iter_mut() {
            node.grad = None;
        }
        let mut grads: Vec<Option<Vec<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![R::ONE]);

        for i in (0..=loss.0).rev() {
            let gy = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.accumulate_parents(i, &gy, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].grad = Some(gy);
            }
        }
        Ok(())
    }

    fn accumulate_parents(&self, i: usize, gy: &[R], grads: &mut [Option<Vec<R>>]) {
        // Lazily allocate a parent's buffer only when it participates.
        macro_rules! buf {
            ($id:expr) => {{
                let id: NodeId = $id;
                if !self.nodes[id.0].needs_grad {
                    None
                } else {
                    Some(
                        grads[id.0]
                            .get_or_insert_with(|| vec![R::ZERO; self.nodes[id.0].value.numel()]),
                    )
                }
            }};
        }

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if let Some(da) = buf!(*a) {
                    for (d, &g) in da.iter_mut().zip(gy) {
                        *d += g;
                    }
                }
                if let Some(db) = buf!(*b) {
                    for (d, &g) in db.iter_mut().zip(gy) {
                        *d += g;
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = buf!(*a) {
                    for (d, &g) in da.iter_mut().zip(gy) {
                        *d += g;
                    }
                }
                if let Some(db) = buf!(*b) {
                    for (d, &g) in db.iter_mut().zip(gy) {
                        *d -= g;
                    }
                }
            }
            Op::AddRow(x, b) => {
                let d = self.nodes[b.0].value.numel();
                if let Some(dx) = buf!(*x) {
                    for (o, &g) in dx.iter_mut().zip(gy) {
                        *o += g;
                    }
                }
                if let Some(db) = buf!(*b) {
                    for (idx, &g) in gy.iter().enumerate() {
                        db[idx % d] += g;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                if let Some(da) = buf!(*a) {
                    for ((d, &g), &bvv) in da.iter_mut().zip(gy).zip(bv) {
                        *d += g * bvv;
                    }
                }
                if let Some(db) = buf!(*b) {
                    for ((d, &g), &avv) in db.iter_mut().zip(gy).zip(av) {
                        *d += g * avv;
                    }
                }
            }
            Op::MulRow(x, g_vec) => {
                let d = self.nodes[g_vec.0].value.numel();
                let xv = &self.nodes[x.0].value.data;
                let gv = &self.nodes[g_vec.0].value.data;
                if let Some(dx) = buf!(*x) {
                    for (idx, &g) in gy.iter().enumerate() {
                        dx[idx] += g * gv[idx % d];
                    }
                }
                if let Some(dg) = buf!(*g_vec) {
                    for (idx, &g) in gy.iter().enumerate() {
                        dg[idx % d] += g * xv[idx];
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = buf!(*x) {
                    for (d, &g) in dx.iter_mut().zip(gy) {
                        *d += g * *c;
                    }
                }
            }
            Op::Tanh(x) => {
                let yv = &self.nodes[i].value.data;
                if let Some(dx) = buf!(*x) {
                    for ((d, &g), &y) in dx.iter_mut().zip(gy).zip(yv) {
                        *d += g * (R::ONE - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let yv = &self.nodes[i].value.data;
                if let Some(dx) = buf!(*x) {
                    for ((d, &g), &y) in dx.iter_mut().zip(gy).zip(yv) {
                        *d += g * y * (R::ONE - y);
                    }
                }
            }
            Op::MatmulNn(a, b) => {
                let (m, k) = mat_dims_of(&self.nodes[a.0].value.shape);
                let n = self.nodes[i].value.cols();
                let (av, bv) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                if let Some(da) = buf!(*a) {
                    kernels::matmul_nt_acc(gy, bv, da, m, n, k);
                }
                if let Some(db) = buf!(*b) {
                    kernels::matmul_tn_acc(av, gy, db, k, m, n);
                }
            }
            Op::MatmulNt(a, b) => {
                let (m, k) = mat_dims_of(&self.nodes[a.0].value.shape);
                let n = self.nodes[i].value.cols();
                let (av, bv) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                if let Some(da) = buf!(*a) {
                    kernels::matmul_nn_acc(gy, bv, da, m, n, k);
                }
                if let Some(db) = buf!(*b) {
                    kernels::matmul_tn_acc(gy, av, db, n, m, k);
                }
            }
            Op::MatmulTn(a, b) => {
                let (k, m) = mat_dims_of(&self.nodes[a.0].value.shape);
                let n = self.nodes[i].value.cols();
                let (av, bv) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                if let Some(da) = buf!(*a) {
                    kernels::matmul_nt_acc(bv, gy, da, k, n, m);
                }
                if let Some(db) = buf!(*b) {
                    kernels::matmul_nn_acc(av, gy, db, k, m, n);
                }
            }
            Op::Softmax { x, axis } => {
                let yv = &self.nodes[i].value.data;
                let shape = &self.nodes[i].value.shape;
                if let Some(dx) = buf!(*x) {
                    match (shape.len(), *axis) {
                        (1, 0) => softmax_bwd_slice(yv, gy, dx),
                        (2, 1) => {
                            let d = shape[1];
                            for r in 0..shape[0] {
                                softmax_bwd_slice(
                                    &yv[r * d..(r + 1) * d],
                                    &gy[r * d..(r + 1) * d],
                                    &mut dx[r * d..(r + 1) * d],
                                );
                            }
                        }
                        (2, 0) => {
                            let (rows, cols) = (shape[0], shape[1]);
                            for c in 0..cols {
                                let mut dotv = R::ZERO;
                                for r in 0..rows {
                                    dotv += gy[r * cols + c] * yv[r * cols + c];
                                }
                                for r in 0..rows {
                                    let idx = r * cols + c;
                                    dx[idx] += (gy[idx] - dotv) * yv[idx];
                                }
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
            Op::LayerNorm { x, eps } => {
                let xv = &self.nodes[x.0].value.data;
                let yv = &self.nodes[i].value.data;
                let d = self.nodes[i].value.cols();
                let rows = yv.len() / d;
                let n = R::from_f64(d as f64);
                if let Some(dx) = buf!(*x) {
                    for r in 0..rows {
                        let xs = &xv[r * d..(r + 1) * d];
                        let ys = &yv[r * d..(r + 1) * d];
                        let gs = &gy[r * d..(r + 1) * d];
                        let mut mu = R::ZERO;
                        for &v in xs {
                            mu += v;
                        }
                        mu = mu / n;
                        let mut var = R::ZERO;
                        for &v in xs {
                            var += (v - mu) * (v - mu);
                        }
                        var = var / n;
                        let inv = R::ONE / (var + *eps).sqrt();
                        let mut g_mean = R::ZERO;
                        let mut gy_dot = R::ZERO;
                        for (&g, &y) in gs.iter().zip(ys) {
                            g_mean += g;
                            gy_dot += g * y;
                        }
                        g_mean = g_mean / n;
                        gy_dot = gy_dot / n;
                        for ((o, &g), &y) in dx[r * d..(r + 1) * d].iter_mut().zip(gs).zip(ys) {
                            *o += inv * (g - g_mean - y * gy_dot);
                        }
                    }
                }
            }
            Op::Conv1d { x, w, b, stride, pad_l } => {
                let xs = &self.nodes[x.0].value;
                let ws = &self.nodes[w.0].value;
                let (t_in, c_in) = (xs.shape[0], xs.shape[1]);
                let (c_out, kernel) = (ws.shape[0], ws.shape[1]);
                let mut dx_scratch = vec![R::ZERO; xs.numel()];
                let mut dw_scratch = vec![R::ZERO; ws.numel()];
                let mut db_scratch = vec![R::ZERO; c_out];
                kernels::conv1d_bwd(
                    &xs.data, &ws.data, gy, &mut dx_scratch, &mut dw_scratch, &mut db_scratch,
                    t_in, c_in, c_out, kernel, *stride, *pad_l,
                );
                if let Some(dx) = buf!(*x) {
                    for (d, &g) in dx.iter_mut().zip(&dx_scratch) {
                        *d += g;
                    }
                }
                if let Some(dw) = buf!(*w) {
                    for (d, &g) in dw.iter_mut().zip(&dw_scratch) {
                        *d += g;
                    }
                }
                if let Some(db) = buf!(*b) {
                    for (d, &g) in db.iter_mut().zip(&db_scratch) {
                        *d += g;
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = buf!(*x) {
                    for ((d, &g), &m) in dx.iter_mut().zip(gy).zip(mask) {
                        *d += g * m;
                    }
                }
            }
            Op::MeanRows(x) => {
                let d = self.nodes[i].value.cols();
                let rows = self.nodes[x.0].value.numel() / d;
                let inv = R::from_f64(1.0 / rows as f64);
                if let Some(dx) = buf!(*x) {
                    for r in 0..rows {
                        for (o, &g) in dx[r * d..(r + 1) * d].iter_mut().zip(gy) {
                            *o += g * inv;
                        }
                    }
                }
            }
            Op::MeanAll(x) => {
                let n = self.nodes[x.0].value.numel();
                let g = gy[0] * R::from_f64(1.0 / n as f64);
                if let Some(dx) = buf!(*x) {
                    for d in dx.iter_mut() {
                        *d += g;
                    }
                }
            }
            Op::SumAll(x) => {
                if let Some(dx) = buf!(*x) {
                    for d in dx.iter_mut() {
                        *d += gy[0];
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let w = self.nodes[i].value.cols();
                let d = self.nodes[x.0].value.cols();
                let rows = self.nodes[i].value.rows();
                if let Some(dx) = buf!(*x) {
                    for r in 0..rows {
                        for j in 0..w {
                            dx[r * d + start + j] += gy[r * w + j];
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let d = self.nodes[x.0].value.cols();
                if let Some(dx) = buf!(*x) {
                    for (o, &g) in dx[start * d..].iter_mut().zip(gy) {
                        *o += g;
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let rows = self.nodes[i].value.rows();
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for &xid in xs {
                    let w = self.nodes[xid.0].value.cols();
                    if let Some(dx) = buf!(xid) {
                        for r in 0..rows {
                            for j in 0..w {
                                dx[r * w + j] += gy[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::StackRows(xs) => {
                let mut offset = 0;
                for &xid in xs {
                    let n = self.nodes[xid.0].value.numel();
                    if let Some(dx) = buf!(xid) {
                        for (d, &g) in dx.iter_mut().zip(&gy[offset..offset + n]) {
                            *d += g;
                        }
                    }
                    offset += n;
                }
            }
            Op::Reshape(x) => {
                if let Some(dx) = buf!(*x) {
                    for (d, &g) in dx.iter_mut().zip(gy) {
                        *d += g;
                    }
                }
            }
            Op::BceWithLogits { logit, target } => {
                let z = self.nodes[logit.0].value.data[0];
                if let Some(dz) = buf!(*logit) {
                    dz[0] += gy[0] * (sigmoid(z) - *target);
                }
            }
            Op::CrossEntropyLogits { logits, class } => {
                let zs = &self.nodes[logits.0].value.data;
                let mut probs = zs.clone();
                kernels::softmax_slice(&mut probs);
                if let Some(dz) = buf!(*logits) {
                    for (idx, (d, &p)) in dz.iter_mut().zip(&probs).enumerate() {
                        let t = if idx == *class { R::ONE } else { R::ZERO };
                        *d += gy[0] * (p - t);
                    }
                }
            }
        }
    }
}

fn mat_dims_of(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => unreachable!("matmul inputs are rank <= 2"),
    }
}

fn softmax_bwd_slice<R: Real>(y: &[R], gy: &[R], dx: &mut [R]) {
    let mut dotv = R::ZERO;
    for (&g, &yv) in gy.iter().zip(y) {
        dotv += g * yv;
    }
    for ((d, &g), &yv) in dx.iter_mut().zip(gy).zip(y) {
        *d += (g - dotv) * yv;
    }
}
