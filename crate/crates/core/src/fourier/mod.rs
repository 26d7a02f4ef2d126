//! Fourier transforms `mu^(xi) = int exp(-2 pi i xi.x) dmu(x)` of self-affine
//! measures, by certified self-affinity recursion and by chaos-game Monte
//! Carlo, plus the ball-mass and tube-mass estimators.

mod bounds;
mod frostman;
mod recursive;

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg::{self, Matrix};
use crate::rng;

pub use bounds::{check_cs_bound, CsReport};
pub(crate) use frostman::fit_line;
pub use frostman::{frostman, tube_mass, tube_mass_with, FrostmanEstimate, TubeMass, MAX_PAIRS};
pub use recursive::{fourier_recursive, fourier_recursive_with, RecursiveEvaluator};

/// Evaluation method for `mu^`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Recursive,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Recursive => "recursive",
            Method::MonteCarlo => "mc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(Method::Recursive),
            "mc" | "montecarlo" => Ok(Method::MonteCarlo),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// A value of `mu^` with its error: a certified bound for the recursive
/// method, a standard error for Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierEstimate {
    pub value: Complex64,
    pub error: f64,
    pub method: Method,
}

/// Solves `(Id - sum p_j A_j) c = sum p_j b_j`: the mean of `mu`.
pub fn barycenter(system: &AffineSystem) -> Vec<f64> {
    let d = system.dim();
    let mut avg = Matrix::zeros(d);
    let mut rhs = vec![0.0; d];
    for (m, p) in system.maps().iter().zip(system.weights()) {
        avg = avg.add(&m.linear.scaled(*p));
        for (r, b) in rhs.iter_mut().zip(&m.translation) {
            *r += p * b;
        }
    }
    Matrix::identity(d)
        .sub(&avg)
        .solve(&rhs)
        .expect("spectral radius of sum p_j A_j is below 1")
}

/// Covariance matrix of `mu`, the fixed point of
/// `S = sum_j p_j (A_j S A_j^T + e_j e_j^T)` with `e_j = f_j(c) - c`.
pub fn covariance(system: &AffineSystem) -> Matrix {
    let d = system.dim();
    let c = barycenter(system);
    let mut source = Matrix::zeros(d);
    for (m, p) in system.maps().iter().zip(system.weights()) {
        let e: Vec<f64> = m
            .apply_vec(&c)
            .iter()
            .zip(&c)
            .map(|(x, y)| x - y)
            .collect();
        for i in 0..d {
            for j in 0..d {
                source.set(i, j, source.get(i, j) + p * e[i] * e[j]);
            }
        }
    }
    let mut s = source.clone();
    // contraction with factor max ||A_j||^2
    for _ in 0..10_000 {
        let mut next = source.clone();
        for (m, p) in system.maps().iter().zip(system.weights()) {
            next = next.add(&m.linear.mul(&s).mul(&m.linear.transpose()).scaled(*p));
        }
        let diff = next.max_abs_diff(&s);
        s = next;
        if diff <= 1e-17 * (1.0 + s.trace()) {
            break;
        }
    }
    s
}

/// Chaos-game samples from `mu`, stored flat (`count * dim` coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    dim: usize,
    points: Vec<f64>,
    seed: u64,
    burn_in: usize,
}

impl SamplePool {
    pub fn from_points(dim: usize, points: Vec<f64>, seed: u64) -> Self {
        assert_eq!(points.len() % dim, 0);
        SamplePool {
            dim,
            points,
            seed,
            burn_in: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (a, x) in m.iter_mut().zip(p) {
                *a += x;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// `x_{n+1} = f_{J_n}(x_n)` with i.i.d. letters of law `p`.
///
/// The index range is cut into chunks of [`rng::CHUNK`] points. Each chunk
/// starts from the fixed point of the first map, discards `burn_in` steps and
/// draws from its own stream, so the pool depends only on
/// `(system, count, seed, burn_in)`.
pub fn chaos_sample(system: &AffineSystem, count: usize, seed: u64, burn_in: usize) -> SamplePool {
    let d = system.dim();
    let start = system.map(0).fixed_point().expect("contraction");
    let cum = rng::cumulative(system.weights());
    let chunks = rng::chunked(count, rng::CHUNK, seed, |_, len, r| {
        let mut x = start.clone();
        let mut y = vec![0.0; d];
        let mut out = Vec::with_capacity(len * d);
        for step in 0..burn_in + len {
            let j = rng::pick(&cum, r.random::<f64>());
            system.map(j).apply(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
            if step >= burn_in {
                out.extend_from_slice(&x);
            }
        }
        out
    });
    SamplePool {
        dim: d,
        points: chunks.concat(),
        seed,
        burn_in,
    }
}

/// Monte Carlo `mu^(xi)`: the sample mean of `exp(-2 pi i xi.x_k)` with its
/// plug-in standard error.
pub fn fourier_mc(pool: &SamplePool, xi: &[f64]) -> Result<FourierEstimate> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let n = pool.len();
    let d = pool.dim;
    let partial: Vec<Complex64> = {
        use rayon::prelude::*;
        pool.points
            .par_chunks(rng::CHUNK * d)
            .map(|chunk| {
                chunk
                    .chunks_exact(d)
                    .map(|x| Complex64::from_polar(1.0, -TAU * linalg::dot(xi, x)))
                    .sum()
            })
            .collect()
    };
    let mean = partial.iter().sum::<Complex64>() / n as f64;
    let var = if n > 1 {
        (1.0 - mean.norm_sqr()).max(0.0) * n as f64 / (n - 1) as f64
    } else {
        0.0
    };
    Ok(FourierEstimate {
        value: mean,
        error: (var / n as f64).sqrt(),
        method: Method::MonteCarlo,
    })
}

/// One row of the Fourier CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierRow {
    pub xi: Vec<f64>,
    pub estimate: FourierEstimate,
}

/// CSV with columns `xi_1..xi_d, re, im, abs, stderr_or_certified_bound, method`.
pub fn fourier_csv(dim: usize, rows: &[FourierRow]) -> String {
    let mut out = String::new();
    for i in 1..=dim {
        let _ = write!(out, "xi_{i},");
    }
    out.push_str("re,im,abs,stderr_or_certified_bound,method\n");
    for row in rows {
        for x in &row.xi {
            let _ = write!(out, "{x},");
        }
        let v = row.estimate.value;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            v.re,
            v.im,
            v.norm(),
            row.estimate.error,
            row.estimate.method.as_str()
        );
    }
    out
}
