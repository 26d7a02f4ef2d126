//! Reference systems used as positive and negative controls.

use rand::Rng;

use crate::ifs::{AffineMap, AffineSystem};
use crate::linalg::Matrix;

fn build(maps: Vec<(Matrix, Vec<f64>)>, weights: Vec<f64>) -> AffineSystem {
    AffineSystem::new(
        maps.into_iter()
            .map(|(a, b)| AffineMap::new(a, b))
            .collect(),
        weights,
    )
    .expect("catalog systems are valid")
}

/// `{0.45 R(1), diag(0.6, 0.25)}` with `b = (0,0), (0.4,0.4)` and equal
/// weights: proximal and totally irreducible.
pub fn proximal_pair() -> AffineSystem {
    build(
        vec![
            (Matrix::scaled_rotation(0.45, 1.0), vec![0.0, 0.0]),
            (Matrix::diag(&[0.6, 0.25]), vec![0.4, 0.4]),
        ],
        vec![0.5, 0.5],
    )
}

/// Middle-thirds Cantor set on the first axis: `diag(1/3, 1/3)`, `b = 0, (2/3, 0)`.
pub fn cantor_product() -> AffineSystem {
    let a = Matrix::scalar(2, 1.0 / 3.0);
    build(
        vec![(a.clone(), vec![0.0, 0.0]), (a, vec![2.0 / 3.0, 0.0])],
        vec![0.5, 0.5],
    )
}

/// Four maps `(1/3) Id` with translations `{0, 2/3}^2`: the product of two
/// Cantor measures, invariant under `x -> 3x` along the axes.
pub fn lattice_control() -> AffineSystem {
    let a = Matrix::scalar(2, 1.0 / 3.0);
    let t = 2.0 / 3.0;
    build(
        vec![
            (a.clone(), vec![0.0, 0.0]),
            (a.clone(), vec![t, 0.0]),
            (a.clone(), vec![0.0, t]),
            (a, vec![t, t]),
        ],
        vec![0.25; 4],
    )
}

/// Single map `x -> x/2 + (1, 0)`; its measure is the point mass at `(2, 0)`.
pub fn dirac() -> AffineSystem {
    build(vec![(Matrix::scalar(2, 0.5), vec![1.0, 0.0])], vec![1.0])
}

/// Two scaled rotations with a common ratio `rho`: the norm cocycle is
/// identically `log rho`, the arithmetic (lattice) case.
pub fn arithmetic_conformal(rho: f64) -> AffineSystem {
    build(
        vec![
            (Matrix::scaled_rotation(rho, 1.0), vec![0.0, 0.0]),
            (Matrix::scaled_rotation(rho, -2.3), vec![0.5, 0.2]),
        ],
        vec![0.5, 0.5],
    )
}

/// Two entrywise positive matrices; they preserve the positive quadrant.
pub fn positive_pair() -> AffineSystem {
    build(
        vec![
            (Matrix::new(2, vec![0.4, 0.2, 0.1, 0.3]), vec![0.0, 0.0]),
            (Matrix::new(2, vec![0.3, 0.1, 0.25, 0.35]), vec![0.5, 0.3]),
        ],
        vec![0.4, 0.6],
    )
}

/// Commuting diagonal maps; both axes are invariant.
pub fn diagonal_pair() -> AffineSystem {
    build(
        vec![
            (Matrix::diag(&[0.5, 0.3]), vec![0.0, 0.0]),
            (Matrix::diag(&[0.4, 0.6]), vec![0.5, 0.4]),
        ],
        vec![0.5, 0.5],
    )
}

/// A three-dimensional pair with distinct singular values.
pub fn spatial_pair() -> AffineSystem {
    let r = {
        let (s, c) = 0.9f64.sin_cos();
        Matrix::new(3, vec![c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    };
    let q = {
        let (s, c) = 0.7f64.sin_cos();
        Matrix::new(3, vec![1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c])
    };
    build(
        vec![
            (r.mul(&Matrix::diag(&[0.35, 0.3, 0.2])), vec![0.0, 0.0, 0.0]),
            (q.mul(&Matrix::diag(&[0.4, 0.25, 0.15])), vec![0.5, 0.2, 0.3]),
        ],
        vec![0.45, 0.55],
    )
}

/// A random system with operator norms in `[min_norm, max_norm]` and
/// Dirichlet-like weights.
pub fn random_system<R: Rng>(
    rng: &mut R,
    dim: usize,
    n_maps: usize,
    min_norm: f64,
    max_norm: f64,
) -> AffineSystem {
    let mut maps = Vec::with_capacity(n_maps);
    while maps.len() < n_maps {
        let data: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = Matrix::new(dim, data);
        let sv = a.singular_values();
        // keep the condition number moderate
        if sv[dim - 1] < 0.1 * sv[0] {
            continue;
        }
        let target = rng.random_range(min_norm..max_norm);
        let b = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        maps.push((a.scaled(target / sv[0]), b));
    }
    let raw: Vec<f64> = (0..n_maps).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // make the sum exact to the last bit
    let rest: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - rest;
    build(maps, weights)
}
