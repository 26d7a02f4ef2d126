//! Finite, heuristic evidence about the semigroup generated by the linear
//! parts: proximality (a product with a simple dominant real eigenvalue) and
//! total irreducibility (no finite union of proper subspaces is invariant).
//!
//! A `witnessed` irreducibility verdict only means that no obstruction was
//! found within the search budget; there is no finite certificate in general.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg::{self, Matrix};
use crate::rng;
use crate::words::compose;

/// Line spanners or plane normals, one vector per candidate.
type Directions = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Proximal,
    TotallyIrreducible,
    Contracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Witnessed,
    Refuted,
    Inconclusive,
}

/// What kind of subspace an orbit element is: lines are stored by a
/// spanning vector, planes (in `R^3`) by a normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceKind {
    Line,
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    EigenGap {
        word: Vec<usize>,
        lambda1: f64,
        lambda2_modulus: f64,
        ratio: f64,
    },
    Conformal {
        scales: Vec<f64>,
    },
    InvariantSubspace {
        basis: Vec<Vec<f64>>,
        residual: f64,
    },
    FiniteOrbit {
        subspace: SubspaceKind,
        representatives: Vec<Vec<f64>>,
    },
    Dispersal {
        candidates: usize,
        orbit_cap: usize,
        products_examined: usize,
    },
    Budget {
        words_examined: usize,
        max_word_len: usize,
    },
    Norms {
        norms: Vec<f64>,
    },
    UnsupportedDimension {
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub property: Property,
    pub verdict: Verdict,
    pub evidence: Evidence,
    pub note: String,
}

impl PropertyVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serialises")
    }
}

/// Shown next to heuristic verdicts.
pub const CRITERION_NOTE: &str = "for d = 2 and d = 3 the decay hypotheses reduce to total \
irreducibility of the generated semigroup together with a non-compact image (a proximal element); \
verdicts here are finite searches, not Zariski-closure computations";

/// Enumerated words are capped at this many; longer lengths are sampled.
pub const WORD_BUDGET: usize = 100_000;

/// Words of length `1..=max_len` in order of length: all of them while the
/// budget allows, then a deterministic random sample per length.
fn word_list(n_letters: usize, max_len: usize, budget: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![vec![]];
    for len in 1..=max_len {
        let count = (n_letters as f64).powi(len as i32);
        let remaining = budget.saturating_sub(out.len());
        if remaining == 0 {
            break;
        }
        if count <= remaining as f64 && layer.len() * n_letters == count as usize {
            layer = layer
                .iter()
                .flat_map(|w| {
                    (0..n_letters).map(move |j| {
                        let mut v = w.clone();
                        v.push(j);
                        v
                    })
                })
                .collect();
            out.extend(layer.iter().cloned());
        } else {
            let take = remaining.min(budget / max_len.max(1)).max(1);
            let mut r = rng::stream(seed, len as u64);
            for _ in 0..take {
                out.push((0..len).map(|_| r.random_range(0..n_letters)).collect());
            }
            layer.clear();
        }
    }
    out
}

fn product(system: &AffineSystem, word: &[usize]) -> Matrix {
    word.iter()
        .fold(Matrix::identity(system.dim()), |p, &j| p.mul(&system.map(j).linear))
}

fn is_real(l: num_complex::Complex64) -> bool {
    l.im.abs() <= 1e-12 * l.norm().max(f64::MIN_POSITIVE)
}

/// Looks for a product `A_w` with `|lambda_1| / |lambda_2| >= 1 + gap_threshold`
/// and `lambda_1` real. Refuted when every generator is a scaled orthogonal
/// map, since such products never separate eigenvalue moduli.
pub fn proximality_witness(
    system: &AffineSystem,
    max_word_len: usize,
    gap_threshold: f64,
    seed: u64,
) -> PropertyVerdict {
    if system.linear_parts().all(|a| a.is_conformal(1e-12)) {
        return PropertyVerdict {
            property: Property::Proximal,
            verdict: Verdict::Refuted,
            evidence: Evidence::Conformal {
                scales: system.norms().to_vec(),
            },
            note: "every generator is a scaled orthogonal map; so is every product".into(),
        };
    }
    let words = word_list(system.len(), max_word_len, WORD_BUDGET, seed);
    let hit = words
        .par_iter()
        .enumerate()
        .filter_map(|(k, w)| {
            let ev = product(system, w).eigenvalues();
            let (l1, l2) = (ev[0], ev[1]);
            let ratio = l1.norm() / l2.norm();
            (is_real(l1) && ratio >= 1.0 + gap_threshold).then_some((k, l1.re, l2.norm(), ratio))
        })
        .min_by_key(|h| h.0);
    match hit {
        Some((k, lambda1, lambda2_modulus, ratio)) => PropertyVerdict {
            property: Property::Proximal,
            verdict: Verdict::Witnessed,
            evidence: Evidence::EigenGap {
                word: words[k].clone(),
                lambda1,
                lambda2_modulus,
                ratio,
            },
            note: format!("simple dominant real eigenvalue at word length {}", words[k].len()),
        },
        None => PropertyVerdict {
            property: Property::Proximal,
            verdict: Verdict::Inconclusive,
            evidence: Evidence::Budget {
                words_examined: words.len(),
                max_word_len,
            },
            note: "no product with the required gap within budget".into(),
        },
    }
}

/// Recomputes the eigenvalue ratio of a witness word from scratch.
pub fn recheck_gap(system: &AffineSystem, word: &[usize]) -> Result<f64> {
    let w = compose(system, word)?;
    let ev = w.product().eigenvalues();
    Ok(ev[0].norm() / ev[1].norm())
}

/// All norms are below one: always witnessed for a validated system.
pub fn contraction_verdict(system: &AffineSystem) -> PropertyVerdict {
    PropertyVerdict {
        property: Property::Contracting,
        verdict: Verdict::Witnessed,
        evidence: Evidence::Norms {
            norms: system.norms().to_vec(),
        },
        note: "operator norms of all generators are below one".into(),
    }
}

/// Orbit elements are identified when their sine distance is below this.
const SAME_SUBSPACE: f64 = 1e-7;
/// Residual below which a subspace counts as invariant.
pub const INVARIANCE_TOL: f64 = 1e-9;
/// Orbits larger than this count as dispersed.
pub const ORBIT_CAP: usize = 64;

fn same_direction(a: &[f64], b: &[f64]) -> bool {
    let c = linalg::dot(a, b).abs().min(1.0);
    (1.0 - c * c).max(0.0).sqrt() <= SAME_SUBSPACE
}

fn canonical(mut v: Vec<f64>) -> Vec<f64> {
    linalg::normalize(&mut v);
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

/// Image of a line (spanning vector) or plane (normal) under `a`, given `a^{-T}`.
fn image(kind: SubspaceKind, a: &Matrix, a_inv_t: &Matrix, v: &[f64]) -> Vec<f64> {
    match kind {
        SubspaceKind::Line => canonical(a.apply_vec(v)),
        SubspaceKind::Plane => canonical(a_inv_t.apply_vec(v)),
    }
}

/// Orthonormal basis of the subspace.
fn basis_of(kind: SubspaceKind, v: &[f64]) -> Vec<Vec<f64>> {
    match kind {
        SubspaceKind::Line => vec![v.to_vec()],
        SubspaceKind::Plane => {
            // two vectors orthogonal to the normal
            let d = v.len();
            let mut out: Vec<Vec<f64>> = Vec::new();
            for i in 0..d {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                let c = linalg::dot(&e, v);
                e.iter_mut().zip(v).for_each(|(x, n)| *x -= c * n);
                for b in &out {
                    let c = linalg::dot(&e, b);
                    e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
                if linalg::normalize(&mut e) > 1e-6 {
                    out.push(e);
                }
                if out.len() == d - 1 {
                    break;
                }
            }
            out
        }
    }
}

/// `max_j ||(Id - proj_V) A_j B||` for an orthonormal basis `B` of `V`.
pub fn invariance_residual(system: &AffineSystem, basis: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in system.linear_parts() {
        for b in basis {
            let mut img = a.apply_vec(b);
            for e in basis {
                let c = linalg::dot(&img, e);
                img.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
            worst = worst.max(linalg::norm(&img));
        }
    }
    worst
}

enum OrbitOutcome {
    Closed(Vec<Vec<f64>>),
    Dispersed,
}

fn orbit(kind: SubspaceKind, gens: &[(Matrix, Matrix)], start: Vec<f64>) -> OrbitOutcome {
    let mut orbit = vec![start];
    let mut head = 0;
    while head < orbit.len() {
        let v = orbit[head].clone();
        head += 1;
        for (a, ait) in gens {
            let w = image(kind, a, ait, &v);
            if !orbit.iter().any(|o| same_direction(o, &w)) {
                if orbit.len() == ORBIT_CAP {
                    return OrbitOutcome::Dispersed;
                }
                orbit.push(w);
            }
        }
    }
    OrbitOutcome::Closed(orbit)
}

/// Searches for invariant subspaces or finite invariant unions of them.
///
/// Candidate lines are real eigenvectors of products of length up to
/// `max_word_len` (at most `n_candidates` products) and the coordinate axes;
/// in `R^3` candidate planes are kernels of real left eigenvectors and the
/// coordinate planes. A candidate fixed by every generator refutes
/// irreducibility outright; a candidate whose generator orbit closes up with
/// at most [`ORBIT_CAP`] elements refutes total irreducibility. Otherwise the
/// verdict is `witnessed`, meaning no obstruction was found within budget.
pub fn irreducibility_test(
    system: &AffineSystem,
    max_word_len: usize,
    n_candidates: usize,
    seed: u64,
) -> Result<PropertyVerdict> {
    let d = system.dim();
    if d > 3 {
        return Ok(PropertyVerdict {
            property: Property::TotallyIrreducible,
            verdict: Verdict::Inconclusive,
            evidence: Evidence::UnsupportedDimension { dim: d },
            note: "candidate search is implemented for d = 2 and d = 3 only".into(),
        });
    }
    let gens: Vec<(Matrix, Matrix)> = system
        .linear_parts()
        .map(|a| {
            let inv_t = inverse(a).ok_or(Error::Singular)?.transpose();
            Ok((a.clone(), inv_t))
        })
        .collect::<Result<_>>()?;
    let mut words = word_list(system.len(), max_word_len, n_candidates.max(1), seed);
    words.truncate(n_candidates.max(1));

    let harvested: Vec<(Directions, Directions)> = words
        .par_iter()
        .map(|w| {
            let p = product(system, w);
            let mut lines = Vec::new();
            let mut planes = Vec::new();
            let ev = p.eigenvalues();
            let c = p.trace() / d as f64;
            if p.max_abs_diff(&Matrix::scalar(d, c)) <= 1e-9 * c.abs().max(f64::MIN_POSITIVE) {
                // every subspace is fixed by a scalar product; try the axes
                return (lines, planes);
            }
            for l in ev.iter().filter(|l| is_real(**l)) {
                lines.push(canonical(p.real_eigenvector(l.re)));
                if d == 3 {
                    planes.push(canonical(p.transpose().real_eigenvector(l.re)));
                }
            }
            (lines, planes)
        })
        .collect();
    let mut candidates: Vec<(SubspaceKind, Vec<f64>)> = Vec::new();
    let mut push = |kind: SubspaceKind, v: Vec<f64>| {
        if !candidates.iter().any(|(k, c)| *k == kind && same_direction(c, &v)) {
            candidates.push((kind, v));
        }
    };
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        push(SubspaceKind::Line, e.clone());
        if d == 3 {
            push(SubspaceKind::Plane, e);
        }
    }
    for (lines, planes) in harvested {
        for v in lines {
            push(SubspaceKind::Line, v);
        }
        for v in planes {
            push(SubspaceKind::Plane, v);
        }
    }

    for (kind, v) in &candidates {
        let basis = basis_of(*kind, v);
        let residual = invariance_residual(system, &basis);
        if residual <= INVARIANCE_TOL {
            return Ok(PropertyVerdict {
                property: Property::TotallyIrreducible,
                verdict: Verdict::Refuted,
                evidence: Evidence::InvariantSubspace { basis, residual },
                note: "a proper subspace is invariant under every generator".into(),
            });
        }
    }
    for (kind, v) in &candidates {
        if let OrbitOutcome::Closed(reps) = orbit(*kind, &gens, v.clone()) {
            return Ok(PropertyVerdict {
                property: Property::TotallyIrreducible,
                verdict: Verdict::Refuted,
                note: format!(
                    "a union of {} proper subspaces is invariant under every generator",
                    reps.len()
                ),
                evidence: Evidence::FiniteOrbit {
                    subspace: *kind,
                    representatives: reps,
                },
            });
        }
    }
    Ok(PropertyVerdict {
        property: Property::TotallyIrreducible,
        verdict: Verdict::Witnessed,
        evidence: Evidence::Dispersal {
            candidates: candidates.len(),
            orbit_cap: ORBIT_CAP,
            products_examined: words.len(),
        },
        note: "no obstruction found within budget: every candidate orbit exceeded the cap".into(),
    })
}

fn inverse(a: &Matrix) -> Option<Matrix> {
    let d = a.dim();
    let mut cols = Vec::with_capacity(d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        cols.push(a.solve(&e)?);
    }
    let mut out = Matrix::zeros(d);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out.set(i, j, *v);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::ifs::AffineMap;
    use std::f64::consts::TAU;

    fn system(mats: Vec<Matrix>) -> AffineSystem {
        let n = mats.len();
        let maps = mats
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                let d = m.dim();
                let mut b = vec![0.0; d];
                b[0] = k as f64 * 0.5;
                AffineMap::new(m, b)
            })
            .collect();
        AffineSystem::new(maps, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn diagonal_generator_is_proximal_at_length_one() {
        let s = system(vec![Matrix::diag(&[0.9, 0.1]), Matrix::scaled_rotation(0.5, 0.3)]);
        let v = proximality_witness(&s, 4, 0.05, 1);
        assert_eq!(v.verdict, Verdict::Witnessed);
        match v.evidence {
            Evidence::EigenGap { word, ratio, .. } => {
                assert_eq!(word, vec![0]);
                assert!((ratio - 9.0).abs() < 1e-12);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn conformal_family_is_refuted() {
        let s = system(vec![Matrix::scaled_rotation(0.5, 1.0), Matrix::scaled_rotation(0.3, -0.4)]);
        assert_eq!(proximality_witness(&s, 6, 0.05, 1).verdict, Verdict::Refuted);
    }

    /// Exhaustive oracle: scan every word up to length 8 directly.
    #[test]
    fn proximal_pair_matches_exhaustive_scan() {
        let s = catalog::proximal_pair();
        let v = proximality_witness(&s, 8, 0.05, 1);
        assert_eq!(v.verdict, Verdict::Witnessed);
        let Evidence::EigenGap { word, ratio, .. } = &v.evidence else { panic!() };
        // first witness in length-lexicographic order
        let mut first = None;
        'outer: for len in 1..=8u32 {
            for code in 0..2usize.pow(len) {
                let w: Vec<usize> = (0..len).rev().map(|b| (code >> b) & 1).collect();
                let p = compose(&s, &w).unwrap();
                let ev = p.product().eigenvalues();
                if ev[0].im == 0.0 && ev[0].norm() / ev[1].norm() >= 1.05 {
                    first = Some(w);
                    break 'outer;
                }
            }
        }
        assert_eq!(Some(word.clone()), first);
        assert!((recheck_gap(&s, word).unwrap() - ratio).abs() < 1e-9);
    }

    #[test]
    fn diagonal_generators_are_reducible() {
        let v = irreducibility_test(&catalog::diagonal_pair(), 6, 200, 1).unwrap();
        assert_eq!(v.verdict, Verdict::Refuted);
        let Evidence::InvariantSubspace { basis, residual } = &v.evidence else { panic!("{v:?}") };
        assert!(*residual <= 1e-9);
        assert!(invariance_residual(&catalog::diagonal_pair(), basis) <= 1e-9);
    }

    #[test]
    fn rational_rotation_has_closed_line_orbit() {
        for q in [3usize, 5, 6] {
            let s = system(vec![Matrix::scaled_rotation(0.5, TAU / q as f64)]);
            let v = irreducibility_test(&s, 8, 200, 1).unwrap();
            assert_eq!(v.verdict, Verdict::Refuted, "q = {q}");
            let Evidence::FiniteOrbit { representatives, .. } = &v.evidence else { panic!("{v:?}") };
            // lines: the orbit of an axis under rotation by 2 pi / q
            let expected = if q % 2 == 0 { q / 2 } else { q };
            assert_eq!(representatives.len(), expected);
        }
    }

    #[test]
    fn proximal_pair_disperses() {
        let v = irreducibility_test(&catalog::proximal_pair(), 10, 1000, 1).unwrap();
        assert_eq!(v.verdict, Verdict::Witnessed, "{v:?}");
        let spatial = irreducibility_test(&catalog::spatial_pair(), 6, 300, 1).unwrap();
        assert_eq!(spatial.verdict, Verdict::Witnessed, "{spatial:?}");
    }

    #[test]
    fn scalar_and_block_systems() {
        let v = irreducibility_test(&catalog::lattice_control(), 4, 50, 1).unwrap();
        assert_eq!(v.verdict, Verdict::Refuted);
        // a 3D system fixing the plane z = 0
        let s = system(vec![
            Matrix::new(3, vec![0.3, 0.1, 0.05, -0.2, 0.4, 0.1, 0.0, 0.0, 0.2]),
            Matrix::new(3, vec![0.1, -0.3, 0.2, 0.25, 0.2, -0.1, 0.0, 0.0, 0.35]),
        ]);
        let v = irreducibility_test(&s, 5, 100, 1).unwrap();
        assert_eq!(v.verdict, Verdict::Refuted);
        let Evidence::InvariantSubspace { basis, .. } = &v.evidence else { panic!("{v:?}") };
        assert_eq!(basis.len(), 2);
    }

    #[test]
    fn higher_dimension_is_inconclusive() {
        let s = system(vec![Matrix::scalar(4, 0.5), Matrix::diag(&[0.5, 0.4, 0.3, 0.2])]);
        let v = irreducibility_test(&s, 3, 10, 1).unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn verdicts_are_deterministic_and_serialise() {
        let s = catalog::spatial_pair();
        let a = proximality_witness(&s, 20, 0.05, 7);
        let b = proximality_witness(&s, 20, 0.05, 7);
        assert_eq!(a, b);
        let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(json["property"], "proximal");
        assert!(json["evidence"]["kind"].is_string());
    }
}
