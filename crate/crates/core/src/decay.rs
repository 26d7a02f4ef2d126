//! Decay experiments: `sup_{|xi| = R} |mu^(xi)|` over a geometric grid of
//! magnitudes and a fixed direction set, with a power-law fit.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fourier::{chaos_sample, fourier_mc, FourierEstimate, FourierRow, Method, RecursiveEvaluator, SamplePool};
use crate::ifs::AffineSystem;
use crate::linalg;
use crate::props::{irreducibility_test, proximality_witness, PropertyVerdict, Property, Verdict};
use crate::rng;
use crate::words::DEFAULT_NODE_CAP;

/// Number of low-discrepancy directions before the coordinate axes are added.
pub const DEFAULT_DIRECTIONS: usize = 64;

/// Frequencies `R u` for `R` in `magnitudes` and `u` in `directions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub magnitudes: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub method: Method,
    /// Certified tolerance per point (recursive method).
    pub tol: f64,
    /// Node budget per point (recursive method).
    pub node_cap: usize,
    /// Pool size for Monte Carlo evaluation and fallback.
    pub mc_samples: usize,
    pub seed: u64,
}

impl SweepPlan {
    /// `n` magnitudes from `r_min` to `r_max` in geometric progression and the
    /// default direction set.
    pub fn geometric(dim: usize, r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && n >= 2) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < r_min < r_max and n >= 2, got {r_min}, {r_max}, {n}"
            )));
        }
        let span = r_max / r_min;
        let magnitudes = (0..n)
            .map(|k| if k == n - 1 { r_max } else { r_min * span.powf(k as f64 / (n - 1) as f64) })
            .collect();
        Ok(SweepPlan {
            magnitudes,
            directions: default_directions(dim, DEFAULT_DIRECTIONS),
            method: Method::Recursive,
            tol: 1e-3,
            node_cap: DEFAULT_NODE_CAP,
            mc_samples: 100_000,
            seed: 0,
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.magnitudes.is_empty() || self.magnitudes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("magnitudes must be increasing".into()));
        }
        if self.directions.len() < 8 {
            return Err(Error::InvalidArgument("need at least 8 directions".into()));
        }
        if self
            .directions
            .iter()
            .any(|u| u.len() != dim || (linalg::norm(u) - 1.0).abs() > 1e-9)
        {
            return Err(Error::InvalidArgument("directions must be unit vectors in R^d".into()));
        }
        Ok(())
    }
}

/// `n` golden-angle points on the circle (`d = 2`), a Fibonacci lattice on
/// the sphere (`d = 3`) or seeded Gaussian directions (`d > 3`), followed by
/// the coordinate axes.
pub fn default_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut out: Vec<Vec<f64>> = match dim {
        2 => (0..n)
            .map(|k| {
                let t = golden * k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => (0..n)
            .map(|k| {
                let z = 1.0 - (2 * k + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * k as f64;
                vec![r * t.cos(), r * t.sin(), z]
            })
            .collect(),
        _ => {
            use rand::Rng;
            let mut r = rng::stream(0x6469_7273, 0);
            (0..n)
                .map(|_| {
                    let mut v: Vec<f64> = (0..dim)
                        .map(|_| {
                            let (u, w): (f64, f64) = (r.random::<f64>().max(1e-300), r.random());
                            (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * w).cos()
                        })
                        .collect();
                    linalg::normalize(&mut v);
                    v
                })
                .collect()
        }
    };
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        out.push(e);
    }
    out
}

/// Least-squares power law `log y = c - alpha log x` with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub alpha_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub n_points: usize,
}

/// Fits `log y` against `log x`; `alpha_hat` is minus the slope. The
/// interval uses Student's t with `n - 2` degrees of freedom (infinite when
/// `n = 2`).
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientSamples("a power-law fit needs two points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let residual_rms = (ssr / n).sqrt();
    let half = if lx.len() > 2 {
        let dof = n - 2.0;
        let se = (ssr / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975);
        t * se
    } else {
        f64::INFINITY
    };
    Ok(PowerFit {
        alpha_hat: -slope,
        ci_low: -slope - half,
        ci_high: -slope + half,
        intercept,
        residual_rms,
        n_points: lx.len(),
    })
}

/// One magnitude of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub r: f64,
    pub sup_abs: f64,
    /// Largest per-point error among the directions.
    pub error: f64,
    /// Index into the plan's directions of the maximiser.
    pub argmax: usize,
    pub mc_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub table: Vec<DecayRow>,
    pub points: Vec<FourierRow>,
    pub fit: Option<PowerFit>,
    /// Why no exponent is reported, when `fit` is `None`.
    pub fit_note: String,
    pub verdicts: Vec<PropertyVerdict>,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
}

impl DecayReport {
    pub fn alpha_hat(&self) -> Option<f64> {
        self.fit.map(|f| f.alpha_hat)
    }

    /// CSV with columns `R, sup_abs, error, argmax_direction, mc_points`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("R,sup_abs,error,argmax_direction,mc_points\n");
        for row in &self.table {
            let _ = writeln!(out, "{},{},{},{},{}", row.r, row.sup_abs, row.error, row.argmax, row.mc_points);
        }
        out
    }
}

/// Minimum number of magnitudes entering the fit.
const MIN_FIT_POINTS: usize = 3;
/// Largest residual RMS (natural-log units) for a trusted fit.
pub const MAX_RESIDUAL_RMS: f64 = 0.5;

/// Evaluates `|mu^|` at every `(R, u)` of the plan and fits the decay
/// exponent on the upper half of the magnitudes.
///
/// The recursive method is used unless the plan asks for Monte Carlo; a
/// recursive point that exceeds its node budget falls back to Monte Carlo on a
/// shared pool. The exponent is reported only when at least three magnitudes
/// enter the fit, every fitted value exceeds twice its error, and the
/// residual RMS of the log-log fit is below [`MAX_RESIDUAL_RMS`].
pub fn decay_sweep(system: &AffineSystem, plan: &SweepPlan) -> Result<DecayReport> {
    plan.validate(system.dim())?;
    let evaluator = RecursiveEvaluator::new(system).with_node_cap(plan.node_cap);
    let pool: OnceLock<SamplePool> = OnceLock::new();
    let get_pool = || pool.get_or_init(|| chaos_sample(system, plan.mc_samples, plan.seed, system.default_burn_in()));
    let tasks: Vec<(usize, usize)> = (0..plan.magnitudes.len())
        .flat_map(|i| (0..plan.directions.len()).map(move |k| (i, k)))
        .collect();
    let results: Vec<(usize, usize, Vec<f64>, Result<FourierEstimate>)> = tasks
        .par_iter()
        .map(|&(i, k)| {
            let xi: Vec<f64> = plan.directions[k].iter().map(|u| u * plan.magnitudes[i]).collect();
            let est = match plan.method {
                Method::Recursive => match evaluator.eval(&xi, plan.tol) {
                    Err(Error::BudgetExceeded { .. }) => fourier_mc(get_pool(), &xi),
                    other => other,
                },
                Method::MonteCarlo => fourier_mc(get_pool(), &xi),
            };
            (i, k, xi, est)
        })
        .collect();

    let mut points = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut table: Vec<DecayRow> = Vec::new();
    let mut current: Option<DecayRow> = None;
    for (i, k, xi, est) in results {
        let r = plan.magnitudes[i];
        if current.as_ref().is_some_and(|row| row.r != r) {
            table.extend(current.take());
        }
        match est {
            Ok(e) => {
                let row = current.get_or_insert(DecayRow {
                    r,
                    sup_abs: -1.0,
                    error: 0.0,
                    argmax: k,
                    mc_points: 0,
                });
                let a = e.value.norm();
                if a > row.sup_abs {
                    row.sup_abs = a;
                    row.argmax = k;
                }
                row.error = row.error.max(e.error);
                if e.method == Method::MonteCarlo {
                    row.mc_points += 1;
                }
                points.push(FourierRow { xi, estimate: e });
            }
            Err(err) => failures.push(format!("R = {r}, direction {k}: {err}")),
        }
    }
    table.extend(current);

    let seed = plan.seed;
    let verdicts = vec![
        proximality_witness(system, 8, 0.05, seed),
        irreducibility_test(system, 8, 500, seed)?,
    ];
    let mut warnings = Vec::new();
    if system.is_singleton() {
        warnings.push("singleton: all maps share a fixed point, mu is a point mass".into());
    }
    for v in &verdicts {
        match (v.property, v.verdict) {
            (Property::TotallyIrreducible, Verdict::Refuted) => {
                warnings.push(format!("reducible: {}", v.note));
            }
            (Property::Proximal, Verdict::Refuted) => {
                warnings.push(format!("not proximal: {}", v.note));
            }
            _ => {}
        }
    }
    if is_arithmetic(system) {
        warnings.push("arithmetic: every norm cocycle increment equals the same log rho".into());
    }
    if !smoothed_non_increasing(&table) {
        warnings.push("sup |mu^| is not non-increasing in R after 3-point smoothing".into());
    }

    let (fit, fit_note) = fit_tail(&table);
    Ok(DecayReport {
        table,
        points,
        fit,
        fit_note,
        verdicts,
        warnings,
        failures,
    })
}

/// All generators are scaled orthogonal maps with one common ratio.
pub fn is_arithmetic(system: &AffineSystem) -> bool {
    let n0 = system.norms()[0];
    system.linear_parts().all(|a| a.is_conformal(1e-12))
        && system.norms().iter().all(|n| (n - n0).abs() <= 1e-12 * n0)
}

fn smoothed_non_increasing(table: &[DecayRow]) -> bool {
    if table.len() < 3 {
        return true;
    }
    let s: Vec<f64> = table
        .windows(3)
        .map(|w| (w[0].sup_abs + w[1].sup_abs + w[2].sup_abs) / 3.0)
        .collect();
    s.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn fit_tail(table: &[DecayRow]) -> (Option<PowerFit>, String) {
    let tail = &table[table.len() / 2..];
    if tail.len() < MIN_FIT_POINTS {
        return (None, format!("no reliable decay exponent: {} magnitudes in the fit", tail.len()));
    }
    if let Some(row) = tail.iter().find(|r| !(r.sup_abs > 2.0 * r.error)) {
        return (
            None,
            format!(
                "no reliable decay exponent: at R = {} the value {} is within twice its error {}",
                row.r, row.sup_abs, row.error
            ),
        );
    }
    let x: Vec<f64> = tail.iter().map(|r| r.r).collect();
    let y: Vec<f64> = tail.iter().map(|r| r.sup_abs).collect();
    match fit_power_law(&x, &y) {
        Ok(fit) if fit.residual_rms < MAX_RESIDUAL_RMS => (Some(fit), "fitted on the upper half of magnitudes".into()),
        Ok(fit) => (
            None,
            format!("no reliable decay exponent: residual RMS {} too large", fit.residual_rms),
        ),
        Err(e) => (None, format!("no reliable decay exponent: {e}")),
    }
}

/// `s = |xi|^{eps / (6 + eps)}` and `t = log(|xi| / s)`, so that `s e^t = |xi|`.
/// Requires `xi_norm >= 1` and `epsilon1_hat > 0`.
pub fn schedule_st(xi_norm: f64, epsilon1_hat: f64) -> (f64, f64) {
    debug_assert!(xi_norm >= 1.0 && epsilon1_hat > 0.0);
    let s = xi_norm.powf(epsilon1_hat / (6.0 + epsilon1_hat));
    (s, (xi_norm / s).ln())
}

/// Default `eps_1` for [`schedule_st`] when no renewal fit is available.
pub const DEFAULT_EPSILON1: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn directions_are_unit_and_include_axes() {
        for d in [2, 3, 4] {
            let dirs = default_directions(d, 64);
            assert_eq!(dirs.len(), 64 + d);
            for u in &dirs {
                assert!((linalg::norm(u) - 1.0).abs() < 1e-12);
            }
            assert_eq!(dirs[64][0], 1.0);
        }
    }

    #[test]
    fn plan_validation() {
        let mut p = SweepPlan::geometric(2, 16.0, 4096.0, 9).unwrap();
        assert!((p.magnitudes[1] - 32.0).abs() < 1e-9);
        assert_eq!(p.magnitudes[8], 4096.0);
        assert!(p.validate(2).is_ok());
        p.directions.truncate(5);
        assert!(p.validate(2).is_err());
        assert!(SweepPlan::geometric(2, 10.0, 5.0, 4).is_err());
    }

    #[test]
    fn power_law_recovers_exponent() {
        let x: Vec<f64> = (0..8).map(|k| 2f64.powi(k + 3)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-0.7)).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.alpha_hat - 0.7).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.ci_high - f.ci_low < 1e-9);
        // noisy data: interval covers and widens
        let yn: Vec<f64> = y.iter().enumerate().map(|(k, v)| v * (1.0 + 0.1 * (k as f64 * 2.1).sin())).collect();
        let g = fit_power_law(&x, &yn).unwrap();
        assert!(g.ci_low < 0.7 && 0.7 < g.ci_high);
    }

    /// The t quantile for 3 degrees of freedom is 3.182446...
    #[test]
    fn interval_uses_student_t() {
        let x = [1.0f64, 2.0, 4.0, 8.0, 16.0];
        let y = [1.0f64, 0.6, 0.5, 0.2, 0.15];
        let f = fit_power_law(&x, &y).unwrap();
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let mx = lx.iter().sum::<f64>() / 5.0;
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        let ssr: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - f.intercept + f.alpha_hat * a).powi(2)).sum();
        let half = 3.182_446_305_284_263 * (ssr / 3.0 / sxx).sqrt();
        assert!((f.ci_high - f.alpha_hat - half).abs() < 1e-9);
    }

    #[test]
    fn schedule_identities() {
        assert_eq!(schedule_st(1.0, 0.5), (1.0, 0.0));
        let (s, _) = schedule_st(1e4, 6.0);
        assert!((s - 100.0).abs() < 1e-9);
        for k in 0..50 {
            let xi = 1.0 + 37.0 * k as f64;
            let (s, t) = schedule_st(xi, 0.3 + 0.1 * k as f64);
            assert!((s * t.exp() - xi).abs() <= 1e-12 * xi);
        }
    }

    #[test]
    fn dirac_control_is_flat() {
        let s = catalog::dirac();
        let plan = SweepPlan::geometric(2, 16.0, 4096.0, 9).unwrap();
        let rep = decay_sweep(&s, &plan).unwrap();
        for row in &rep.table {
            assert!((row.sup_abs - 1.0).abs() < 1e-9);
        }
        let a = rep.alpha_hat().unwrap();
        assert!(a.abs() <= 0.01, "{a}");
        assert!(rep.warnings.iter().any(|w| w.starts_with("singleton")));
    }

    #[test]
    fn cantor_product_is_reducible_and_does_not_decay() {
        let s = catalog::cantor_product();
        let mut plan = SweepPlan::geometric(2, 3.0, 729.0, 6).unwrap();
        plan.magnitudes = (1..=6).map(|k| 3f64.powi(k)).collect();
        let rep = decay_sweep(&s, &plan).unwrap();
        assert!(rep.warnings.iter().any(|w| w.starts_with("reducible")));
        // along e_1 the values repeat at powers of three
        let along: Vec<f64> = plan
            .magnitudes
            .iter()
            .map(|&r| {
                rep.points
                    .iter()
                    .find(|p| p.xi == [r, 0.0])
                    .expect("axis point")
                    .estimate
                    .value
                    .norm()
            })
            .collect();
        for v in &along {
            assert!((v - along[0]).abs() < 2e-3);
        }
    }

    #[test]
    fn budget_falls_back_to_monte_carlo() {
        let s = catalog::proximal_pair();
        let mut plan = SweepPlan::geometric(2, 64.0, 256.0, 3).unwrap();
        plan.node_cap = 50;
        plan.mc_samples = 20_000;
        let rep = decay_sweep(&s, &plan).unwrap();
        assert!(rep.table.iter().all(|r| r.mc_points > 0));
        assert!(rep.points.iter().any(|p| p.estimate.method == Method::MonteCarlo));
        assert!(rep.failures.is_empty());
    }
}
