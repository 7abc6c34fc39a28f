//! Central finite differences for gradient verification.
//!
//! The checker only re-evaluates a forward closure at perturbed points, so
//! it stays independent of the tape's backward rules. Checks run in f64.

/// Central difference gradient of `f` at `x` with step `h`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let fp = f(&xs);
        xs[i] = orig - h;
        let fm = f(&xs);
        xs[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Worst relative disagreement between analytic and numeric gradients.
///
/// Per-coordinate error is `|a - n| / max(|a|, |n|)` with an absolute
/// escape below 1e-7 so that genuinely-zero gradients do not divide by
/// noise.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let diff = (a - n).abs();
        if diff <= 1e-7 {
            continue;
        }
        worst = worst.max(diff / a.abs().max(n.abs()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_polynomial_derivative() {
        // f(x) = sum(x^2) at [1, 2] -> [2, 4]
        let g = central_diff(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5);
        assert!(max_rel_err(&[2.0, 4.0], &g) < 1e-9);
    }
}
