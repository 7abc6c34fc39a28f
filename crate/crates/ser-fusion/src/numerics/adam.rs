//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};
use crate::numerics::params::ParamStore;
use crate::numerics::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second-moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<R: Real>(cfg: AdamConfig, params: &ParamStore<R>) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta1)
            || !(0.0..1.0).contains(&cfg.beta2)
            || cfg.epsilon <= 0.0
            || cfg.lr < 0.0
        {
            return Err(SerError::Usage(format!(
                "adam: invalid hyperparameters {cfg:?}"
            )));
        }
        let first = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let second = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Ok(AdamState { cfg, step_count: 0, first_moment: first, second_moment: second })
    }
}

/// One optimizer step. `grads` is indexed like the store; `None` means the
/// parameter was unreachable from the loss and is treated as zero gradient.
/// Moments are held in f64 so repeated tiny updates do not stall in f32.
pub fn adam_step<R: Real>(
    params: &mut ParamStore<R>,
    grads: &[Option<Vec<R>>],
    state: &mut AdamState,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(SerError::Shape(format!(
            "adam: {} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (id, g) in params.ids().zip(grads) {
        if let Some(g) = g {
            if g.len() != params.get(id).numel() {
                return Err(SerError::Shape(format!(
                    "adam: gradient length {} vs parameter {} ({})",
                    g.len(),
                    params.get(id).numel(),
                    params.name(id)
                )));
            }
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let AdamConfig { lr, beta1, beta2, epsilon } = state.cfg;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for (idx, id) in params.ids().enumerate() {
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        let tensor = params.get_mut(id);
        for (j, p) in tensor.data.iter_mut().enumerate() {
            let g = grads[idx].as_ref().map_or(0.0, |g| g[j].to_f64());
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let update = lr * m_hat / (v_hat.sqrt() + epsilon);
            *p = R::from_f64(p.to_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn store_with(v: &[f64]) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.add("w", Tensor::from_f64s(vec![v.len()], v).unwrap());
        p
    }

    #[test]
    fn zero_gradient_is_a_noop_from_fresh_state() {
        let mut p = store_with(&[0.5, -1.5]);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        adam_step(&mut p, &[Some(vec![0.0, 0.0])], &mut st).unwrap();
        assert_eq!(p.get(crate::numerics::ParamId(0)).data, vec![0.5, -1.5]);
        assert_eq!(st.step_count, 1);

        // Absent gradients behave identically.
        adam_step(&mut p, &[None], &mut st).unwrap();
        assert_eq!(p.get(crate::numerics::ParamId(0)).data, vec![0.5, -1.5]);
    }

    #[test]
    fn first_step_magnitude_is_about_lr_times_sign() {
        // Bias correction makes the first update lr * g/|g| up to epsilon.
        let mut p = store_with(&[1.0]);
        let cfg = AdamConfig { lr: 3e-5, ..AdamConfig::default() };
        let mut st = AdamState::new(cfg, &p).unwrap();
        adam_step(&mut p, &[Some(vec![0.5])], &mut st).unwrap();
        let moved = 1.0 - p.get(crate::numerics::ParamId(0)).data[0];
        assert!((moved - 3e-5).abs() < 3e-9, "first step was {moved}");
    }

    #[test]
    fn descends_a_convex_quadratic() {
        // f(x) = x^2, grad = 2x; two steps strictly decrease f.
        let mut p = store_with(&[1.0]);
        let cfg = AdamConfig { lr: 1e-2, ..AdamConfig::default() };
        let mut st = AdamState::new(cfg, &p).unwrap();
        let f = |p: &ParamStore<f64>| p.get(crate::numerics::ParamId(0)).data[0].powi(2);
        let mut prev = f(&p);
        for _ in 0..2 {
            let x = p.get(crate::numerics::ParamId(0)).data[0];
            adam_step(&mut p, &[Some(vec![2.0 * x])], &mut st).unwrap();
            let cur = f(&p);
            assert!(cur < prev, "{cur} !< {prev}");
            prev = cur;
        }
    }

    #[test]
    fn rejects_mismatched_gradient_shape() {
        let mut p = store_with(&[1.0, 2.0]);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        assert!(adam_step(&mut p, &[Some(vec![1.0])], &mut st).is_err());
    }
}
