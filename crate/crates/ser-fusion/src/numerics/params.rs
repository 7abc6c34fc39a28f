//! Named, ordered parameter storage.
//!
//! Parameters live outside any tape; each forward pass leases them onto a
//! fresh tape as `requires_grad` leaves. Entry order is insertion order and
//! fixes both the checkpoint layout and the gradient-reduction order.

use rand::Rng;

use crate::error::{Result, SerError};
use crate::numerics::real::Real;
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::Tensor;
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamStore<R> {
    names: Vec<String>,
    tensors: Vec<Tensor<R>>,
}

impl<R: Real> Default for ParamStore<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<R>) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        id
    }

    /// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// drawn from the parameter's own seed stream so insertion order
    /// changes never reshuffle other layers.
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        seeds: &SeedStream,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = seeds.derive(name).rng();
        let numel = shape.iter().product();
        let data = (0..numel)
            .map(|_| R::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        self.add(name, Tensor { shape, data })
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_const(&mut self, name: &str, shape: Vec<usize>, v: f64) -> ParamId {
        let numel = shape.iter().product();
        self.add(name, Tensor { shape, data: vec![R::from_f64(v); numel] })
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Lease every parameter onto a tape as a `requires_grad` leaf.
    /// The returned vector is indexed by `ParamId`.
    pub fn lease(&self, tape: &mut Tape<R>) -> Vec<NodeId> {
        self.tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), true))
            .collect()
    }

    /// Collect gradients for all parameters after a backward pass.
    /// Parameters unreachable from the loss get `None`.
    pub fn grads(&self, tape: &Tape<R>, leases: &[NodeId]) -> Vec<Option<Vec<R>>> {
        leases.iter().map(|&n| tape.grad(n).map(|g| g.to_vec())).collect()
    }

    /// Overwrite all values from another store with identical layout.
    pub fn copy_from(&mut self, other: &ParamStore<R>) -> Result<()> {
        if self.names != other.names {
            return Err(SerError::Shape("parameter layout mismatch".into()));
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// All parameter values as one flat f64 vector, in store order.
    pub fn flatten_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_elements());
        for t in &self.tensors {
            out.extend(t.data.iter().map(|v| v.to_f64()));
        }
        out
    }

    /// Overwrite all values from a flat f64 vector, in store order.
    pub fn set_from_f64(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_elements() {
            return Err(SerError::Shape(format!(
                "flat vector {} vs {} parameter elements",
                flat.len(),
                self.total_elements()
            )));
        }
        let mut offset = 0;
        for t in self.tensors.iter_mut() {
            for v in t.data.iter_mut() {
                *v = R::from_f64(flat[offset]);
                offset += 1;
            }
        }
        Ok(())
    }
}
