//! Resampling statistics: percentile bootstrap and permutation tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SerError};

/// Percentile bootstrap interval for the mean, resampling whole values
/// (here: one value per subject) with replacement. Deterministic in `seed`.
pub fn bootstrap_ci(values: &[f64], level: f64, iters: usize, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(SerError::Data("bootstrap_ci: empty sample".into()));
    }
    if !(0.0..1.0).contains(&level) || iters == 0 {
        return Err(SerError::Usage(format!(
            "bootstrap_ci: level {level}, iters {iters}"
        )));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut s = 0.0;
        for _ in 0..n {
            s += values[rng.gen_range(0..n)];
        }
        means.push(s / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let alpha = (1.0 - level) / 2.0;
    let lo_idx = ((alpha * iters as f64).floor() as usize).min(iters - 1);
    let hi_idx = (((1.0 - alpha) * iters as f64).ceil() as usize)
        .saturating_sub(1)
        .min(iters - 1);
    Ok((means[lo_idx], means[hi_idx]))
}

/// Two-sided permutation test on the difference of group means with the
/// add-one correction: `p = (1 + #{|d_perm| >= |d_obs|}) / (1 + iters)`.
pub fn permutation_pvalue(
    group_a: &[f64],
    group_b: &[f64],
    iters: usize,
    seed: u64,
) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(SerError::Data("permutation_pvalue: empty group".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let observed = (mean(group_a) - mean(group_b)).abs();

    let mut pool: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let n_a = group_a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..iters {
        // Fisher-Yates over the pool, then split.
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.gen_range(0..=i));
        }
        let d = (mean(&pool[..n_a]) - mean(&pool[n_a..])).abs();
        if d >= observed - 1e-15 {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (1 + iters) as f64)
}

/// Two-sided Mann-Whitney U test via the normal approximation with tie
/// correction. Available as an alternative to the permutation test.
pub fn mann_whitney_u_pvalue(group_a: &[f64], group_b: &[f64]) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(SerError::Data("mann_whitney: empty group".into()));
    }
    let (n1, n2) = (group_a.len() as f64, group_b.len() as f64);
    let mut all: Vec<(f64, usize)> = group_a
        .iter()
        .map(|&v| (v, 0))
        .chain(group_b.iter().map(|&v| (v, 1)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));

    // Midranks with tie bookkeeping.
    let n = all.len();
    let mut ranks = vec![0.0f64; n];
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && (all[j + 1].0 - all[i].0).abs() < 1e-15 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            tie_term += t * t * t - t;
        }
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = rank;
        }
        i = j + 1;
    }
    let r1: f64 = all
        .iter()
        .zip(&ranks)
        .filter(|((_, g), _)| *g == 0)
        .map(|(_, &r)| r)
        .sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let n_tot = n1 + n2;
    let sigma2 = n1 * n2 / 12.0 * ((n_tot + 1.0) - tie_term / (n_tot * (n_tot - 1.0)));
    if sigma2 <= 0.0 {
        return Ok(1.0);
    }
    // Continuity-corrected z.
    let z = (u1 - mu).abs().max(0.5) - 0.5;
    let z = z / sigma2.sqrt();
    Ok((2.0 * normal_sf(z)).min(1.0))
}

/// Upper tail of the standard normal via erorfc-style approximation.
fn normal_sf(z: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26 on erf.
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    0.5 * (1.0 - erf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_gives_degenerate_interval() {
        let (lo, hi) = bootstrap_ci(&[3.5; 12], 0.95, 2000, 7).unwrap();
        assert_eq!((lo, hi), (3.5, 3.5));
    }

    #[test]
    fn interval_contains_half_and_narrows_with_n() {
        let mk = |n: usize| -> Vec<f64> { (0..n).map(|i| (i % 2) as f64).collect() };
        let (lo10, hi10) = bootstrap_ci(&mk(10), 0.95, 4000, 3).unwrap();
        let (lo100, hi100) = bootstrap_ci(&mk(100), 0.95, 4000, 3).unwrap();
        assert!(lo10 <= 0.5 && 0.5 <= hi10);
        assert!(lo100 <= 0.5 && 0.5 <= hi100);
        assert!(hi100 - lo100 < hi10 - lo10, "interval failed to narrow");
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let vals = [0.3, 0.9, 0.2, 0.7, 0.4];
        let a = bootstrap_ci(&vals, 0.95, 1000, 11).unwrap();
        let b = bootstrap_ci(&vals, 0.95, 1000, 11).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci(&vals, 0.95, 1000, 12).unwrap();
        assert!(a != c || vals.len() == 1);
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let vals = [1.0, 2.0, 4.0, 8.0, 16.0, 3.0];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let (lo, hi) = bootstrap_ci(&vals, 0.95, 10_000, 5).unwrap();
        assert!(lo <= mean && mean <= hi);
    }

    #[test]
    fn identical_groups_give_p_near_one() {
        let g = [0.4, 0.6, 0.5, 0.45, 0.55];
        let p = permutation_pvalue(&g, &g, 10_000, 9).unwrap();
        assert!(p >= 0.9, "p = {p}");
    }

    #[test]
    fn disjoint_groups_match_exact_enumeration() {
        // {0,0,0,0} vs {10,10,10,10}: of the C(8,4)=70 relabelings only
        // the two all-or-nothing splits reach |d| = 10, so p -> 2/70.
        let a = [0.0; 4];
        let b = [10.0; 4];
        let p = permutation_pvalue(&a, &b, 10_000, 13).unwrap();
        let exact = 2.0 / 70.0;
        assert!((p - exact).abs() < 0.01, "p = {p}, exact {exact}");
        assert!(p >= 1.0 / 10_001.0);
    }

    #[test]
    fn permutation_is_seed_deterministic() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 2.5, 4.0];
        let p1 = permutation_pvalue(&a, &b, 2000, 21).unwrap();
        let p2 = permutation_pvalue(&a, &b, 2000, 21).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(permutation_pvalue(&[], &[1.0], 100, 1).is_err());
        assert!(bootstrap_ci(&[], 0.95, 100, 1).is_err());
    }

    #[test]
    fn mann_whitney_sane_on_shifted_groups() {
        let a: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 * 0.1 + 5.0).collect();
        let p = mann_whitney_u_pvalue(&a, &b).unwrap();
        assert!(p < 0.001, "p = {p}");
        let p_same = mann_whitney_u_pvalue(&a, &a).unwrap();
        assert!(p_same > 0.9, "p = {p_same}");
    }
}
