//! The complex transfer operator `P_z f(x) = sum_j p_j e^{z sigma(g_j, x)} f(g_j x)`
//! discretised on a uniform grid of the circle with periodic linear
//! interpolation.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::WalkLaw;

/// Complex values on the nodes `theta_i = 2 pi i / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleGrid {
    pub values: Vec<Complex64>,
}

/// Grids coarser than this are rejected.
pub const MIN_POINTS: usize = 64;

impl CircleGrid {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.len() < MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "{} grid points, need at least {MIN_POINTS}",
                values.len()
            )));
        }
        Ok(CircleGrid { values })
    }

    pub fn from_fn(n_points: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new((0..n_points).map(|i| f(TAU * i as f64 / n_points as f64)).collect())
    }

    pub fn constant(n_points: usize, c: Complex64) -> Result<Self> {
        Self::new(vec![c; n_points])
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn angle(&self, i: usize) -> f64 {
        TAU * i as f64 / self.n_points() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Periodic linear interpolation at angle `theta`.
    pub fn interpolate(&self, theta: f64) -> Complex64 {
        let n = self.n_points();
        let pos = theta.rem_euclid(TAU) / TAU * n as f64;
        let k = (pos.floor() as usize).min(n - 1);
        let frac = pos - k as f64;
        self.values[k] * (1.0 - frac) + self.values[(k + 1) % n] * frac
    }
}

#[derive(Debug, Clone, Copy)]
struct Stencil {
    k: usize,
    frac: f64,
    sigma: f64,
}

/// Precomputed images of the grid nodes under each matrix of the law.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    n_points: usize,
    weights: Vec<f64>,
    /// `stencils[j * n + i]` for matrix `j` at node `i`.
    stencils: Vec<Stencil>,
}

impl TransferOperator {
    pub fn new(law: &WalkLaw, n_points: usize) -> Result<Self> {
        if law.dim() != 2 {
            return Err(Error::DimensionNot2(law.dim()));
        }
        if n_points < MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "{n_points} grid points, need at least {MIN_POINTS}"
            )));
        }
        let mut stencils = Vec::with_capacity(law.matrices().len() * n_points);
        for g in law.matrices() {
            for i in 0..n_points {
                let th = TAU * i as f64 / n_points as f64;
                let v = g.apply_vec(&[th.cos(), th.sin()]);
                let sigma = v[0].hypot(v[1]).ln();
                let pos = v[1].atan2(v[0]).rem_euclid(TAU) / TAU * n_points as f64;
                let mut k = pos.floor() as usize;
                let mut frac = pos - k as f64;
                if k >= n_points {
                    k = 0;
                    frac = 0.0;
                }
                // snap rounding noise onto nodes
                if frac < 1e-12 {
                    frac = 0.0;
                } else if frac > 1.0 - 1e-12 {
                    k = (k + 1) % n_points;
                    frac = 0.0;
                }
                stencils.push(Stencil { k, frac, sigma });
            }
        }
        Ok(TransferOperator {
            n_points,
            weights: law.weights().to_vec(),
            stencils,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `out_i = sum_j p_j e^{z sigma_j(i)} f_interp(g_j x_i)`.
    pub fn apply_into(&self, z: Complex64, f: &[Complex64], out: &mut [Complex64]) {
        let n = self.n_points;
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (j, p) in self.weights.iter().enumerate() {
            let row = &self.stencils[j * n..(j + 1) * n];
            for (o, s) in out.iter_mut().zip(row) {
                let v = if s.frac == 0.0 {
                    f[s.k]
                } else {
                    f[s.k] * (1.0 - s.frac) + f[(s.k + 1) % n] * s.frac
                };
                let factor = if z == Complex64::new(0.0, 0.0) {
                    Complex64::new(*p, 0.0)
                } else {
                    *p * (z * s.sigma).exp()
                };
                *o += factor * v;
            }
        }
    }

    pub fn apply(&self, z: Complex64, grid: &CircleGrid) -> Result<CircleGrid> {
        if grid.n_points() != self.n_points {
            return Err(Error::InvalidArgument("grid size does not match the operator".into()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_points];
        self.apply_into(z, &grid.values, &mut out);
        Ok(CircleGrid { values: out })
    }

    /// Nodes mapped onto themselves by every matrix: each carries a
    /// one-dimensional restriction of the operator.
    pub fn invariant_nodes(&self) -> Vec<usize> {
        let n = self.n_points;
        (0..n)
            .filter(|&i| {
                (0..self.weights.len()).all(|j| {
                    let s = self.stencils[j * n + i];
                    s.k == i && s.frac == 0.0
                })
            })
            .collect()
    }

    /// `|sum_j p_j e^{z sigma_j(i)}|`, the modulus of the restriction at node `i`.
    pub fn restricted_modulus(&self, i: usize, z: Complex64) -> f64 {
        let n = self.n_points;
        self.weights
            .iter()
            .enumerate()
            .map(|(j, p)| *p * (z * self.stencils[j * n + i].sigma).exp())
            .sum::<Complex64>()
            .norm()
    }
}

/// `P_z f` on the grid of `f`.
pub fn transfer_apply(law: &WalkLaw, z: Complex64, grid: &CircleGrid) -> Result<CircleGrid> {
    TransferOperator::new(law, grid.n_points())?.apply(z, grid)
}

/// Power-iteration outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub modulus: f64,
    pub iterations: usize,
    /// `max / min - 1` of the growth ratios in the final window.
    pub spread: f64,
    pub converged: bool,
}

/// Growth ratios averaged over this many final iterations.
const WINDOW: usize = 32;
/// Relative spread accepted as converged.
pub const SPREAD_TOL: f64 = 1e-6;

/// Runs the sup-norm power iteration for `n_iter` steps (at least `2 * WINDOW`).
/// The modulus is the geometric mean of the growth ratios over the last
/// window, which also averages out rotation between eigenvalues of equal
/// modulus.
pub fn power_iteration(op: &TransferOperator, z: Complex64, n_iter: usize) -> ModulusEstimate {
    let n = op.n_points();
    let n_iter = n_iter.max(2 * WINDOW);
    // constant plus a smooth non-symmetric perturbation
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let th = TAU * i as f64 / n as f64;
            Complex64::new(
                1.0 + 0.3 * th.cos() + 0.2 * (2.0 * th).sin() + 0.05 * (17.0 * th + 0.3).cos(),
                0.1 * (3.0 * th).cos(),
            )
        })
        .collect();
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    let mut ratios = Vec::with_capacity(WINDOW);
    let mut norm = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for it in 0..n_iter {
        op.apply_into(z, &v, &mut next);
        let new_norm = next.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if new_norm == 0.0 {
            return ModulusEstimate {
                modulus: 0.0,
                iterations: it + 1,
                spread: 0.0,
                converged: true,
            };
        }
        if it + WINDOW >= n_iter {
            ratios.push(new_norm / norm);
        }
        let inv = 1.0 / new_norm;
        for (a, b) in v.iter_mut().zip(&next) {
            *a = b * inv;
        }
        norm = 1.0;
    }
    let modulus = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max / min - 1.0;
    ModulusEstimate {
        modulus,
        iterations: n_iter,
        spread,
        converged: spread <= SPREAD_TOL,
    }
}

/// Leading spectral modulus of the discretised `P_z`.
pub fn leading_modulus(law: &WalkLaw, z: Complex64, n_points: usize, n_iter: usize) -> Result<f64> {
    let op = TransferOperator::new(law, n_points)?;
    let est = power_iteration(&op, z, n_iter);
    if !est.converged {
        return Err(Error::NoConvergence {
            iterations: est.iterations,
            spread: est.spread,
        });
    }
    Ok(est.modulus)
}

/// Leading modulus along `a + i b` for a grid of `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScan {
    pub a: f64,
    pub b_grid: Vec<f64>,
    pub leading_modulus: Vec<f64>,
    pub converged: Vec<bool>,
    pub spread: Vec<f64>,
    pub n_points: usize,
    pub n_iter: usize,
    /// Grid nodes fixed by every matrix (a reducible law).
    pub invariant_nodes: Vec<usize>,
    /// Per `b`, the largest restriction modulus over the invariant nodes.
    pub restricted_modulus: Option<Vec<f64>>,
}

impl SpectralScan {
    pub fn reducible(&self) -> bool {
        !self.invariant_nodes.is_empty()
    }

    /// Flat at one within `tol` across the scan: the arithmetic signature.
    pub fn is_flat(&self, tol: f64) -> bool {
        self.leading_modulus.iter().all(|m| (m - 1.0).abs() <= tol)
    }

    /// Largest modulus over `b` with `lo <= |b| <= hi`.
    pub fn max_modulus_between(&self, lo: f64, hi: f64) -> Option<f64> {
        self.b_grid
            .iter()
            .zip(&self.leading_modulus)
            .filter(|(b, _)| (lo..=hi).contains(&b.abs()))
            .map(|(_, m)| *m)
            .reduce(f64::max)
    }

    /// CSV with columns `a, b, leading_modulus, n_points, n_iter, converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,leading_modulus,n_points,n_iter,converged\n");
        for ((b, m), c) in self.b_grid.iter().zip(&self.leading_modulus).zip(&self.converged) {
            let _ = writeln!(out, "{},{b},{m},{},{},{c}", self.a, self.n_points, self.n_iter);
        }
        out
    }
}

/// Tabulates the leading modulus over `b_grid` at real part `a`. Points that
/// do not converge are kept and marked.
pub fn spectral_scan(law: &WalkLaw, a: f64, b_grid: &[f64], n_points: usize, n_iter: usize) -> Result<SpectralScan> {
    if a.abs() > 0.5 {
        return Err(Error::InvalidArgument(format!("real part {a} outside [-0.5, 0.5]")));
    }
    let op = TransferOperator::new(law, n_points)?;
    let estimates: Vec<ModulusEstimate> = b_grid
        .par_iter()
        .map(|&b| power_iteration(&op, Complex64::new(a, b), n_iter))
        .collect();
    let invariant_nodes = op.invariant_nodes();
    let restricted_modulus = (!invariant_nodes.is_empty()).then(|| {
        b_grid
            .iter()
            .map(|&b| {
                invariant_nodes
                    .iter()
                    .map(|&i| op.restricted_modulus(i, Complex64::new(a, b)))
                    .fold(0.0, f64::max)
            })
            .collect()
    });
    Ok(SpectralScan {
        a,
        b_grid: b_grid.to_vec(),
        leading_modulus: estimates.iter().map(|e| e.modulus).collect(),
        converged: estimates.iter().map(|e| e.converged).collect(),
        spread: estimates.iter().map(|e| e.spread).collect(),
        n_points,
        n_iter: n_iter.max(2 * WINDOW),
        invariant_nodes,
        restricted_modulus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::linalg::Matrix;

    fn proximal_law() -> WalkLaw {
        WalkLaw::from_system(&catalog::proximal_pair())
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn constants_are_fixed_at_zero() {
        for law in [
            proximal_law(),
            WalkLaw::from_system(&catalog::positive_pair()),
            WalkLaw::from_system(&catalog::diagonal_pair()),
        ] {
            let g = CircleGrid::constant(256, one()).unwrap();
            let out = transfer_apply(&law, Complex64::new(0.0, 0.0), &g).unwrap();
            for v in &out.values {
                assert!((v - one()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_law_factorises() {
        let rho: f64 = 0.3;
        let b = 7.5;
        let law = WalkLaw::new(
            vec![Matrix::scaled_rotation(rho, 1.0), Matrix::scaled_rotation(rho, -2.3)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let g = CircleGrid::from_fn(512, |th| Complex64::from_polar(1.0, 3.0 * th)).unwrap();
        let z = Complex64::new(0.0, b);
        let out = transfer_apply(&law, z, &g).unwrap();
        let averaged = transfer_apply(&law, Complex64::new(0.0, 0.0), &g).unwrap();
        let factor = Complex64::from_polar(1.0, b * rho.ln());
        for (o, a) in out.values.iter().zip(&averaged.values) {
            assert!((o - factor * a).norm() < 1e-12);
        }
        // modulus preserved node-wise for a single rotation and constant |f|
        let single = WalkLaw::new(vec![Matrix::scaled_rotation(rho, TAU / 512.0 * 5.0)], vec![1.0]).unwrap();
        let out = transfer_apply(&single, z, &g).unwrap();
        for v in &out.values {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn modulus_contraction_and_positivity() {
        let law = proximal_law();
        let op = TransferOperator::new(&law, 256).unwrap();
        let g = CircleGrid::from_fn(256, |th| Complex64::new(th.sin() * 2.0, (3.0 * th).cos())).unwrap();
        let abs = CircleGrid::new(g.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect()).unwrap();
        let a = op.apply(Complex64::new(0.0, 13.0), &g).unwrap();
        let b = op.apply(Complex64::new(0.0, 0.0), &abs).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(x.norm() <= y.re + 1e-12);
            assert!(y.re >= 0.0 && y.im == 0.0);
        }
    }

    #[test]
    fn refinement_consistency() {
        // Richardson: interpolation error is O(h^2) for smooth f
        let law = proximal_law();
        let f = |th: f64| Complex64::new((2.0 * th).cos(), th.sin());
        let z = Complex64::new(0.0, 3.0);
        let mut errs = Vec::new();
        for n in [256, 512, 1024] {
            let out = transfer_apply(&law, z, &CircleGrid::from_fn(n, f).unwrap()).unwrap();
            // exact images of the node values
            let exact = CircleGrid::from_fn(n, |th| {
                law.matrices()
                    .iter()
                    .zip(law.weights())
                    .map(|(g, p)| {
                        let v = g.apply_vec(&[th.cos(), th.sin()]);
                        *p * (z * v[0].hypot(v[1]).ln()).exp() * f(v[1].atan2(v[0]))
                    })
                    .sum()
            })
            .unwrap();
            let err = out
                .values
                .iter()
                .zip(&exact.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let h = TAU / n as f64;
            assert!(err <= 4.0 * h * h, "{n}: {err}");
            errs.push(err);
        }
        assert!(errs[2] < errs[0] / 8.0);
    }

    #[test]
    fn zero_gives_one() {
        for law in [proximal_law(), WalkLaw::from_system(&catalog::diagonal_pair())] {
            let m = leading_modulus(&law, Complex64::new(0.0, 0.0), 256, 2000).unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{m}");
        }
    }

    #[test]
    fn arithmetic_profile_is_flat() {
        let law = WalkLaw::from_system(&catalog::arithmetic_conformal(0.5));
        let scan = spectral_scan(&law, 0.0, &[-20.0, -3.0, 0.0, 4.5, 31.0], 256, 2000).unwrap();
        assert!(scan.is_flat(1e-6), "{:?}", scan.leading_modulus);
        assert!(!scan.reducible());
    }

    #[test]
    fn diagonal_law_is_flagged_reducible() {
        let law = WalkLaw::from_system(&catalog::diagonal_pair());
        let scan = spectral_scan(&law, 0.0, &[0.0, 5.0, 10.0], 256, 2000).unwrap();
        assert!(scan.reducible());
        assert!(scan.invariant_nodes.contains(&0));
        let restricted = scan.restricted_modulus.as_ref().unwrap();
        assert!((restricted[0] - 1.0).abs() < 1e-15);
        // the restriction is an eigenvalue of the discretisation
        for (m, r) in scan.leading_modulus.iter().zip(restricted) {
            assert!(m + 1e-6 >= *r);
        }
    }

    #[test]
    fn rejects_other_dimensions_and_coarse_grids() {
        let law = WalkLaw::from_system(&catalog::spatial_pair());
        assert!(matches!(TransferOperator::new(&law, 256), Err(Error::DimensionNot2(3))));
        assert!(TransferOperator::new(&proximal_law(), 32).is_err());
    }

    #[test]
    fn scan_csv_layout() {
        let scan = spectral_scan(&proximal_law(), 0.0, &[0.0, 1.0], 128, 100).unwrap();
        let csv = scan.to_csv();
        assert!(csv.starts_with("a,b,leading_modulus,n_points,n_iter,converged\n0,0,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
