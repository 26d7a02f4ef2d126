use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use super::SamplePool;
use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg;
use crate::rng;

/// Cap on sampled pairs for tube masses.
pub const MAX_PAIRS: usize = 10_000_000;

/// Ball-mass exponents of `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrostmanEstimate {
    /// `max_j log p_j / log ||A_j||`, the lower-bound exponent.
    pub s1: f64,
    /// Fitted slope of `log sup_x mu(B(x, r))` against `log r`.
    pub s2_hat: f64,
    pub c1: f64,
    pub c2: f64,
    /// `(r, sup_x mu(B(x, r)), inf_x mu(B(x, r)))` over pool centres.
    pub table: Vec<(f64, f64, f64)>,
}

/// Number of pool points used as ball centres.
const CENTERS: usize = 2000;

fn cell_hash(x: &[f64], r: f64, offset: &[i64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (xi, o) in x.iter().zip(offset) {
        let c = (xi / r).floor() as i64 + o;
        h ^= c as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3).rotate_left(17);
    }
    h
}

/// Pool-based masses `mu(B(x_k, r))` at a deterministic stride of centres.
fn ball_masses(pool: &SamplePool, r: f64, n_centers: usize) -> Vec<f64> {
    let d = pool.dim();
    let zero = vec![0i64; d];
    let mut buckets: HashMap<u64, Vec<u32>> = HashMap::new();
    for (k, p) in pool.points().enumerate() {
        buckets.entry(cell_hash(p, r, &zero)).or_default().push(k as u32);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let o = (code % 3) as i64 - 1;
                    code /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let n = pool.len();
    let stride = (n / n_centers.min(n)).max(1);
    (0..n)
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&c| {
            let x = pool.point(c);
            let mut keys: Vec<u64> = offsets.iter().map(|o| cell_hash(x, r, o)).collect();
            keys.sort_unstable();
            keys.dedup();
            let count: usize = keys
                .iter()
                .filter_map(|k| buckets.get(k))
                .flatten()
                .filter(|&&i| linalg::distance(pool.point(i as usize), x) <= r)
                .count();
            count as f64 / n as f64
        })
        .collect()
}

/// Least-squares line `y = a + b x`; returns `(a, b)`.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Closed-form `s1` and pool-fitted `s2_hat`.
///
/// `radii` must be strictly decreasing. A workable choice is a dyadic range
/// well below the attractor diameter and above the pool's resolution,
/// e.g. `2^-3 .. 2^-9` for `10^6` points on a set of dimension below one.
pub fn frostman(system: &AffineSystem, pool: &SamplePool, radii: &[f64]) -> Result<FrostmanEstimate> {
    if pool.len() < 100 {
        return Err(Error::InsufficientSamples(format!(
            "{} pool points, need at least 100",
            pool.len()
        )));
    }
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) || radii[radii.len() - 1] <= 0.0 {
        return Err(Error::InvalidArgument(
            "radii must be positive, strictly decreasing, at least two".into(),
        ));
    }
    let s1 = system
        .weights()
        .iter()
        .zip(system.norms())
        .map(|(p, r)| p.ln() / r.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let table: Vec<(f64, f64, f64)> = radii
        .iter()
        .map(|&r| {
            let masses = ball_masses(pool, r, CENTERS);
            let sup = masses.iter().copied().fold(0.0, f64::max);
            let inf = masses.iter().copied().fold(1.0, f64::min);
            (r, sup, inf)
        })
        .collect();
    let lx: Vec<f64> = table.iter().map(|t| t.0.ln()).collect();
    let ly: Vec<f64> = table.iter().map(|t| t.1.ln()).collect();
    let (intercept, s2_hat) = fit_line(&lx, &ly);
    let c1 = table
        .iter()
        .map(|&(r, _, inf)| inf / r.powf(s1))
        .fold(f64::INFINITY, f64::min);
    Ok(FrostmanEstimate {
        s1,
        s2_hat,
        c1,
        c2: intercept.exp(),
        table,
    })
}

/// `(mu x mu)({|x - y| <= delta})` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeMass {
    pub delta: f64,
    pub mass: f64,
    pub stderr: f64,
    pub pairs: usize,
}

/// Tube mass from at most [`MAX_PAIRS`] random distinct pairs of the pool.
pub fn tube_mass(pool: &SamplePool, delta: f64) -> Result<TubeMass> {
    tube_mass_with(pool, delta, MAX_PAIRS)
}

/// Tube mass from at most `max_pairs` distinct pairs, drawn from a stream
/// derived from the pool seed. With `delta = 0` only exact duplicates count.
pub fn tube_mass_with(pool: &SamplePool, delta: f64, max_pairs: usize) -> Result<TubeMass> {
    let n = pool.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!("{n} pool points, need 2")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be >= 0")));
    }
    let total_pairs = n.saturating_mul(n - 1) / 2;
    let pairs = max_pairs.min(total_pairs).max(1);
    let seed = rng::derive_seed(pool.seed(), 0x7475_6265);
    let hits: usize = rng::chunked(pairs, 1 << 16, seed, |_, len, r| {
        (0..len)
            .filter(|_| {
                let i = r.random_range(0..n);
                let mut j = r.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                linalg::distance(pool.point(i), pool.point(j)) <= delta
            })
            .count()
    })
    .into_iter()
    .sum();
    let mass = hits as f64 / pairs as f64;
    Ok(TubeMass {
        delta,
        mass,
        stderr: (mass * (1.0 - mass) / pairs as f64).sqrt(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::fourier::chaos_sample;

    /// Cantor function by ternary digits.
    fn cantor_cdf(x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let (mut x, mut f, mut scale) = (x, 0.0, 0.5);
        for _ in 0..60 {
            x *= 3.0;
            let digit = x.floor();
            x -= digit;
            if digit == 1.0 {
                return f + scale;
            }
            if digit == 2.0 {
                f += scale;
            }
            scale *= 0.5;
        }
        f
    }

    /// Exact `sup_x mu(B(x, r))` for the Cantor measure, scanning centres at
    /// the left endpoints of the level-12 construction intervals.
    fn cantor_sup_mass(r: f64) -> f64 {
        (0..4096u32)
            .map(|k| {
                let x: f64 = (0..12)
                    .filter(|b| k >> b & 1 == 1)
                    .map(|b| 2.0 / 3f64.powi(12 - b))
                    .sum();
                cantor_cdf(x + r) - cantor_cdf(x - r)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn s1_closed_form() {
        let s = catalog::cantor_product();
        let pool = chaos_sample(&s, 1000, 1, 30);
        let est = frostman(&s, &pool, &[0.25, 0.125]).unwrap();
        assert!((est.s1 - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!((est.s1 - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn dirac_has_flat_ball_mass() {
        let s = catalog::dirac();
        let pool = chaos_sample(&s, 2000, 1, 60);
        let est = frostman(&s, &pool, &[0.1, 0.01, 0.001]).unwrap();
        assert!(est.table.iter().all(|t| t.1 == 1.0));
        assert!(est.s2_hat.abs() < 1e-12);
    }

    #[test]
    fn cantor_s2_against_digit_counting() {
        let radii: Vec<f64> = (3..=9).map(|k| 0.5f64.powi(k)).collect();
        let exact: Vec<f64> = radii.iter().map(|&r| cantor_sup_mass(r)).collect();
        let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = exact.iter().map(|m| m.ln()).collect();
        let (_, exact_slope) = fit_line(&lx, &ly);
        assert!((0.5..=0.75).contains(&exact_slope), "oracle slope {exact_slope}");

        let s = catalog::cantor_product();
        let pool = chaos_sample(&s, 1_000_000, 17, s.default_burn_in());
        let est = frostman(&s, &pool, &radii).unwrap();
        assert!((0.5..=0.75).contains(&est.s2_hat), "s2_hat {}", est.s2_hat);
        assert!((est.s2_hat - exact_slope).abs() < 0.05);
        for ((_, sup, _), e) in est.table.iter().zip(&exact) {
            assert!(sup <= &(e * 1.1 + 1e-3), "{sup} vs exact {e}");
        }
    }

    #[test]
    fn frostman_rejects_bad_input() {
        let s = catalog::cantor_product();
        let pool = chaos_sample(&s, 50, 1, 30);
        assert!(matches!(
            frostman(&s, &pool, &[0.1, 0.05]),
            Err(Error::InsufficientSamples(_))
        ));
        let pool = chaos_sample(&s, 500, 1, 30);
        assert!(frostman(&s, &pool, &[0.05, 0.1]).is_err());
    }

    #[test]
    fn tube_mass_edge_cases() {
        let s = catalog::proximal_pair();
        let pool = chaos_sample(&s, 5000, 3, 40);
        let (_, r) = s.attractor_ball();
        let t = tube_mass_with(&pool, 2.0 * r, 100_000).unwrap();
        assert_eq!(t.mass, 1.0);
        let dirac = chaos_sample(&catalog::dirac(), 500, 3, 60);
        assert_eq!(tube_mass_with(&dirac, 1e-9, 10_000).unwrap().mass, 1.0);
        assert_eq!(tube_mass_with(&dirac, 0.0, 10_000).unwrap().mass, 1.0);
        let one = SamplePool::from_points(2, vec![0.0, 0.0], 0);
        assert!(matches!(tube_mass(&one, 0.1), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn tube_slope_matches_s2() {
        let s = catalog::cantor_product();
        let pool = chaos_sample(&s, 1_000_000, 23, s.default_burn_in());
        let radii: Vec<f64> = (3..=9).map(|k| 0.5f64.powi(k)).collect();
        let est = frostman(&s, &pool, &radii).unwrap();
        let masses: Vec<f64> = radii
            .iter()
            .map(|&d| tube_mass_with(&pool, d, 2_000_000).unwrap().mass)
            .collect();
        let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
        let (_, slope) = fit_line(&lx, &ly);
        assert!((slope - est.s2_hat).abs() < 0.15, "tube {slope} vs s2 {}", est.s2_hat);
    }
}
