use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::{barycenter, covariance, FourierEstimate, Method};
use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg::{self, Matrix};
use crate::words::DEFAULT_NODE_CAP;

/// Maps sharing a bit-identical linear part send a frequency to the same
/// child, so their phases are summed into one coefficient.
#[derive(Debug, Clone)]
struct Group {
    linear: Matrix,
    members: Vec<(f64, Vec<f64>)>,
    weight: f64,
}

/// Evaluates `mu^` through `mu^(xi) = sum_j p_j e^{-2 pi i xi.b_j} mu^(A_j^T xi)`.
///
/// A branch at frequency `eta` reached with path coefficient `a` and path
/// weight `w` becomes a leaf with value `e^{-2 pi i eta.c}` (c the barycenter)
/// once `|a| * bound(eta) <= tol * w`, where
/// `bound(eta) = min(2 pi |eta| R, 2 pi^2 eta^T S eta, 2)` bounds
/// `|mu^(eta) - e^{-2 pi i eta.c}|` (R the invariant radius about c, S the
/// covariance of `mu`). The path weights of the leaves sum to one, so the
/// accumulated error, which is returned, never exceeds `tol`.
#[derive(Debug, Clone)]
pub struct RecursiveEvaluator {
    dim: usize,
    groups: Vec<Group>,
    center: Vec<f64>,
    radius: f64,
    covariance: Matrix,
    node_cap: usize,
}

impl RecursiveEvaluator {
    pub fn new(system: &AffineSystem) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        for (m, p) in system.maps().iter().zip(system.weights()) {
            match groups.iter_mut().find(|g| g.linear == m.linear) {
                Some(g) => {
                    g.members.push((*p, m.translation.clone()));
                    g.weight += p;
                }
                None => groups.push(Group {
                    linear: m.linear.clone(),
                    members: vec![(*p, m.translation.clone())],
                    weight: *p,
                }),
            }
        }
        let center = barycenter(system);
        let radius = system.ball_about(&center);
        RecursiveEvaluator {
            dim: system.dim(),
            groups,
            center,
            radius,
            covariance: covariance(system),
            node_cap: DEFAULT_NODE_CAP,
        }
    }

    pub fn with_node_cap(mut self, cap: usize) -> Self {
        self.node_cap = cap;
        self
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Upper bound on `|mu^(eta) - e^{-2 pi i eta.c}|`.
    pub fn leaf_bound(&self, eta: &[f64]) -> f64 {
        let first = TAU * linalg::norm(eta) * self.radius;
        let mut quad = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                quad += eta[i] * self.covariance.get(i, j) * eta[j];
            }
        }
        // slack for rounding in the covariance fixed point
        let second = 2.0 * PI * PI * quad.max(0.0) * (1.0 + 1e-9);
        first.min(second).min(2.0)
    }

    pub fn eval(&self, xi: &[f64], tol: f64) -> Result<FourierEstimate> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
        }
        if xi.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "frequency has dimension {}, expected {}",
                xi.len(),
                self.dim
            )));
        }
        let d = self.dim;
        let mut stack: Vec<(Complex64, f64)> = vec![(Complex64::new(1.0, 0.0), 1.0)];
        let mut etas: Vec<f64> = xi.to_vec();
        let mut value = Complex64::new(0.0, 0.0);
        let mut error = 0.0;
        let mut nodes = 1usize;
        let mut eta = vec![0.0; d];
        let mut child = vec![0.0; d];
        while let Some((coef, weight)) = stack.pop() {
            let top = etas.len() - d;
            eta.copy_from_slice(&etas[top..]);
            etas.truncate(top);
            let bound = self.leaf_bound(&eta);
            let modulus = coef.norm();
            if modulus * bound <= tol * weight {
                value += coef * Complex64::from_polar(1.0, -TAU * linalg::dot(&eta, &self.center));
                error += modulus * bound;
                continue;
            }
            nodes += self.groups.len();
            if nodes > self.node_cap {
                return Err(Error::BudgetExceeded {
                    what: "Fourier recursion",
                    cap: self.node_cap,
                });
            }
            for g in &self.groups {
                let phase: Complex64 = g
                    .members
                    .iter()
                    .map(|(p, b)| Complex64::from_polar(*p, -TAU * linalg::dot(&eta, b)))
                    .sum();
                g.linear.apply_transpose(&eta, &mut child);
                stack.push((coef * phase, weight * g.weight));
                etas.extend_from_slice(&child);
            }
        }
        Ok(FourierEstimate {
            value,
            error,
            method: Method::Recursive,
        })
    }
}

/// `mu^(xi)` with a certified error at most `tol`.
pub fn fourier_recursive(system: &AffineSystem, xi: &[f64], tol: f64) -> Result<FourierEstimate> {
    RecursiveEvaluator::new(system).eval(xi, tol)
}

/// As [`fourier_recursive`] with an explicit node budget.
pub fn fourier_recursive_with(
    system: &AffineSystem,
    xi: &[f64],
    tol: f64,
    node_cap: usize,
) -> Result<FourierEstimate> {
    RecursiveEvaluator::new(system)
        .with_node_cap(node_cap)
        .eval(xi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::fourier::{chaos_sample, fourier_mc};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle for the middle-thirds Cantor measure:
    /// `mu^(x) = prod_k e^{-2 pi i x / 3^k} cos(2 pi x / 3^k)`, 60 factors.
    fn cantor_product(x: f64) -> Complex64 {
        (1..=60)
            .map(|k| {
                let a = TAU * x / 3f64.powi(k);
                Complex64::from_polar(a.cos(), -a)
            })
            .product()
    }

    #[test]
    fn zero_frequency_is_exact() {
        let e = fourier_recursive(&catalog::proximal_pair(), &[0.0, 0.0], 1e-9).unwrap();
        assert_eq!(e.value, Complex64::new(1.0, 0.0));
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn cantor_factor_matches_infinite_product() {
        let s = catalog::cantor_product();
        for (x, tol) in [(1.0, 1e-9), (7.3, 1e-8), (-40.0, 1e-10)] {
            let e = fourier_recursive(&s, &[x, 0.0], tol).unwrap();
            let oracle = cantor_product(x);
            assert!(e.error <= tol);
            assert!((e.value - oracle).norm() <= tol + 1e-13, "{x}: {} vs {oracle}", e.value);
        }
        // second coordinate is a point mass at 0
        let e = fourier_recursive(&s, &[1.0, 5.0], 1e-9).unwrap();
        assert!((e.value - cantor_product(1.0)).norm() <= 1e-9 + 1e-13);
    }

    #[test]
    fn dirac_is_exact_at_any_frequency() {
        let s = catalog::dirac();
        let e = fourier_recursive(&s, &[123.4, -5.0], 1e-12).unwrap();
        let exact = Complex64::from_polar(1.0, -TAU * 246.8);
        assert!((e.value - exact).norm() < 1e-9);
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn self_affinity_identity_at_mismatched_tolerances() {
        let s = catalog::proximal_pair();
        let ev = RecursiveEvaluator::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let xi = [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)];
            let tol = 1e-4;
            let lhs = ev.eval(&xi, tol).unwrap();
            let mut rhs = Complex64::new(0.0, 0.0);
            for m in s.maps() {
                let child = m.linear.transpose().apply_vec(&xi);
                let v = ev.eval(&child, tol / 3.0).unwrap();
                rhs += 0.5 * Complex64::from_polar(1.0, -TAU * linalg::dot(&xi, &m.translation)) * v.value;
            }
            assert!((lhs.value - rhs).norm() <= 2.0 * tol);
        }
    }

    #[test]
    fn conjugate_symmetry_is_exact() {
        let ev = RecursiveEvaluator::new(&catalog::proximal_pair());
        let a = ev.eval(&[17.5, -3.25], 1e-5).unwrap();
        let b = ev.eval(&[-17.5, 3.25], 1e-5).unwrap();
        assert_eq!(a.value, b.value.conj());
        assert_eq!(a.error, b.error);
    }

    #[test]
    fn translation_covariance() {
        let s = catalog::proximal_pair();
        let v = [0.31, -0.77];
        let t = s.translated(&v);
        for xi in [[3.0, 4.0], [-11.5, 2.0], [25.0, 25.0]] {
            let a = fourier_recursive(&s, &xi, 1e-6).unwrap();
            let b = fourier_recursive(&t, &xi, 1e-6).unwrap();
            let phase = Complex64::from_polar(1.0, -TAU * linalg::dot(&xi, &v));
            assert!((b.value - phase * a.value).norm() < 1e-12);
        }
    }

    #[test]
    fn modulus_never_exceeds_one() {
        let ev = RecursiveEvaluator::new(&catalog::positive_pair());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let xi = [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)];
            let e = ev.eval(&xi, 1e-3).unwrap();
            assert!(e.value.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let s = catalog::proximal_pair();
        assert!(matches!(
            fourier_recursive_with(&s, &[500.0, 300.0], 1e-9, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn agrees_with_monte_carlo() {
        let s = catalog::proximal_pair();
        let pool = chaos_sample(&s, 200_000, 12, s.default_burn_in());
        let ev = RecursiveEvaluator::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let xi = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
            let r = ev.eval(&xi, 1e-4).unwrap();
            let m = fourier_mc(&pool, &xi).unwrap();
            assert!((r.value - m.value).norm() <= 3.0 * (r.error + m.error));
        }
    }
}
