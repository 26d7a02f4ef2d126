use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use super::SamplePool;
use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg;
use crate::words::{stopping_set, DEFAULT_NODE_CAP};

/// Both sides of
/// `|mu^(xi)|^2 <= iint sum_{w in W_t(z)} p_w e^{-2 pi i A_w^T xi.(x - y)} dmu dmu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsReport {
    pub xi: Vec<f64>,
    pub t: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub n_words: usize,
    /// `lhs - rhs` exceeds four combined standard errors.
    pub violated: bool,
}

const LHS_BATCHES: usize = 20;

/// Unbiased `|mu^(xi)|^2` from `n` phases: `(|S|^2 - n) / (n (n - 1))`.
fn squared_modulus(points: &[f64], d: usize, xi: &[f64]) -> f64 {
    let n = (points.len() / d) as f64;
    let s: Complex64 = points
        .chunks_exact(d)
        .map(|x| Complex64::from_polar(1.0, -TAU * linalg::dot(xi, x)))
        .sum();
    (s.norm_sqr() - n) / (n * (n - 1.0))
}

/// Monte Carlo check of the stopping-time Cauchy-Schwarz bound at `(xi, t)`
/// with `z = xi / |xi|` (any anchor when `xi = 0`).
///
/// The left side is a U-statistic over the whole pool; its standard error
/// comes from the spread over 20 contiguous batches. The right side averages
/// `sum_w p_w cos(2 pi A_w^T xi.(x_k - y_k))` over pairs formed from the two
/// halves of the pool (the imaginary part integrates to zero).
pub fn check_cs_bound(system: &AffineSystem, pool: &SamplePool, xi: &[f64], t: f64) -> Result<CsReport> {
    let d = system.dim();
    let n = pool.len();
    if n < 2 * LHS_BATCHES {
        return Err(Error::InsufficientSamples(format!(
            "{n} pool points, need at least {}",
            2 * LHS_BATCHES
        )));
    }
    let norm = linalg::norm(xi);
    let z: Vec<f64> = if norm > 0.0 {
        xi.iter().map(|x| x / norm).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let set = stopping_set(system, &z, t, DEFAULT_NODE_CAP)?;
    let frequencies: Vec<(f64, Vec<f64>)> = set
        .words()
        .iter()
        .map(|w| (w.weight(), w.product().transpose().apply_vec(xi)))
        .collect();

    let lhs = squared_modulus(pool.flat(), d, xi);
    let batch = n / LHS_BATCHES;
    let batch_values: Vec<f64> = (0..LHS_BATCHES)
        .into_par_iter()
        .map(|b| squared_modulus(&pool.flat()[b * batch * d..(b + 1) * batch * d], d, xi))
        .collect();
    let bm = batch_values.iter().sum::<f64>() / LHS_BATCHES as f64;
    let bvar = batch_values.iter().map(|v| (v - bm) * (v - bm)).sum::<f64>()
        / (LHS_BATCHES - 1) as f64;
    // the full-pool estimator is at least as precise as a batch mean
    let lhs_stderr = (bvar / LHS_BATCHES as f64).sqrt();

    let half = n / 2;
    let samples: Vec<f64> = (0..half)
        .into_par_iter()
        .map(|k| {
            let x = pool.point(k);
            let y = pool.point(k + half);
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            frequencies
                .iter()
                .map(|(p, eta)| p * (TAU * linalg::dot(eta, &diff)).cos())
                .sum()
        })
        .collect();
    let m = half as f64;
    let rhs = samples.iter().sum::<f64>() / m;
    let rvar = samples.iter().map(|v| (v - rhs) * (v - rhs)).sum::<f64>() / (m - 1.0).max(1.0);
    let rhs_stderr = (rvar / m).sqrt();
    let combined = (lhs_stderr * lhs_stderr + rhs_stderr * rhs_stderr).sqrt();
    Ok(CsReport {
        xi: xi.to_vec(),
        t,
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        n_words: set.len(),
        violated: lhs - rhs > 4.0 * combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::fourier::{chaos_sample, RecursiveEvaluator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_frequency_gives_one_on_both_sides() {
        let s = catalog::proximal_pair();
        let pool = chaos_sample(&s, 10_000, 1, 40);
        let r = check_cs_bound(&s, &pool, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.rhs, 1.0);
        assert!(!r.violated);
    }

    /// At t = 0 the right side is sum_j p_j |mu^(A_j^T xi)|^2; compare with
    /// the certified recursion.
    #[test]
    fn t_zero_matches_direct_evaluation() {
        let s = catalog::proximal_pair();
        let pool = chaos_sample(&s, 100_000, 31, s.default_burn_in());
        let ev = RecursiveEvaluator::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let xi = [rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)];
            let r = check_cs_bound(&s, &pool, &xi, 0.0).unwrap();
            assert_eq!(r.n_words, 2);
            let direct: f64 = s
                .maps()
                .iter()
                .zip(s.weights())
                .map(|(m, p)| {
                    let eta = m.linear.transpose().apply_vec(&xi);
                    p * ev.eval(&eta, 1e-6).unwrap().value.norm_sqr()
                })
                .sum();
            assert!((r.rhs - direct).abs() <= 4.0 * r.rhs_stderr + 1e-5, "{} vs {direct}", r.rhs);
            assert!(!r.violated);
        }
    }
}
