//! Finite words over the alphabet of maps, their cached compositions, and
//! the two prefix-free word families used to cut the symbolic tree:
//! words of prescribed matrix norm and stopping-time words.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg::{self, Matrix};

/// Default hard cap on the number of tree nodes visited by an enumeration.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// A word `w = w_1 ... w_n` with `f_w = f_{w_1} o ... o f_{w_n} = A_w + b_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    letters: Vec<usize>,
    product: Matrix,
    translation: Vec<f64>,
    weight: f64,
}

impl Word {
    pub fn empty(dim: usize) -> Self {
        Word {
            letters: Vec::new(),
            product: Matrix::identity(dim),
            translation: vec![0.0; dim],
            weight: 1.0,
        }
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// `A_w`.
    pub fn product(&self) -> &Matrix {
        &self.product
    }

    /// `b_w`.
    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    /// `p_w`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// The word `w j`: `A_{wj} = A_w A_j`, `b_{wj} = b_w + A_w b_j`.
    pub fn push(&self, system: &AffineSystem, j: usize) -> Word {
        let m = system.map(j);
        let mut translation = self.product.apply_vec(&m.translation);
        for (t, b) in translation.iter_mut().zip(&self.translation) {
            *t += b;
        }
        let mut letters = Vec::with_capacity(self.letters.len() + 1);
        letters.extend_from_slice(&self.letters);
        letters.push(j);
        Word {
            letters,
            product: self.product.mul(&m.linear),
            translation,
            weight: self.weight * system.weights()[j],
        }
    }

    /// Concatenation `u v`, i.e. the map `f_u o f_v`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut translation = self.product.apply_vec(&other.translation);
        for (t, b) in translation.iter_mut().zip(&self.translation) {
            *t += b;
        }
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word {
            letters,
            product: self.product.mul(&other.product),
            translation,
            weight: self.weight * other.weight,
        }
    }

    /// `f_w(x)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.product.apply_vec(x);
        for (o, b) in out.iter_mut().zip(&self.translation) {
            *o += b;
        }
        out
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.letters.starts_with(&self.letters)
    }
}

/// Composes the maps named by `letters`.
pub fn compose(system: &AffineSystem, letters: &[usize]) -> Result<Word> {
    let n_maps = system.len();
    if let Some(&letter) = letters.iter().find(|&&l| l >= n_maps) {
        return Err(Error::IndexOutOfRange { letter, n_maps });
    }
    Ok(letters
        .iter()
        .fold(Word::empty(system.dim()), |w, &j| w.push(system, j)))
}

/// Breadth-first expansion of the symbolic tree.
///
/// `step(parent_state, child, letter)` returns the child's state and whether the
/// child is a leaf. Leaves are returned sorted by letters.
fn expand_tree<S, F>(
    system: &AffineSystem,
    root_state: S,
    cap: usize,
    what: &'static str,
    step: F,
) -> Result<Vec<(Word, S)>>
where
    S: Send + Sync + Clone,
    F: Fn(&S, &Word, usize) -> (S, bool) + Sync,
{
    let mut frontier = vec![(Word::empty(system.dim()), root_state)];
    let mut leaves = Vec::new();
    let mut visited = 1usize;
    let step = &step;
    while !frontier.is_empty() {
        visited += frontier.len() * system.len();
        if visited > cap {
            return Err(Error::BudgetExceeded { what, cap });
        }
        let children: Vec<(Word, S, bool)> = frontier
            .par_iter()
            .flat_map_iter(|(w, s)| {
                (0..system.len()).map(move |j| {
                    let child = w.push(system, j);
                    let (state, is_leaf) = step(s, &child, j);
                    (child, state, is_leaf)
                })
            })
            .collect();
        frontier = Vec::new();
        for (w, s, is_leaf) in children {
            if is_leaf {
                leaves.push((w, s));
            } else {
                frontier.push((w, s));
            }
        }
    }
    leaves.sort_by(|a, b| a.0.letters.cmp(&b.0.letters));
    Ok(leaves)
}

/// Words of prescribed matrix norm: `{w : ||A_w|| < r <= ||A_{w~}||}`, where
/// `w~` drops the last letter.
pub fn norm_family(system: &AffineSystem, r: f64, cap: usize) -> Result<Vec<Word>> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r = {r} is not in (0, 1]")));
    }
    let leaves = expand_tree(system, (), cap, "norm family", |_, w, _| {
        ((), w.product().op_norm() < r)
    })?;
    Ok(leaves.into_iter().map(|(w, _)| w).collect())
}

/// The stopping-time word family `W_t(z)` anchored at a unit vector.
#[derive(Debug, Clone)]
pub struct StoppingSet {
    anchor: Vec<f64>,
    threshold: f64,
    words: Vec<Word>,
    cocycles: Vec<f64>,
}

impl StoppingSet {
    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// `sigma(A_w^T, z)` for each word, accumulated along the tree.
    pub fn cocycles(&self) -> &[f64] {
        &self.cocycles
    }

    pub fn total_weight(&self) -> f64 {
        self.words.iter().map(|w| w.weight()).sum()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Enumerates `W_t(z)`: every word `w` with `-sigma(A_w^T, z) > t` whose parent
/// fails that condition.
///
/// `A_w^T z` is maintained incrementally as a unit direction plus an
/// accumulated log-norm: `A_{wj}^T z = A_j^T (A_w^T z)`.
pub fn stopping_set(system: &AffineSystem, z: &[f64], t: f64, cap: usize) -> Result<StoppingSet> {
    if z.len() != system.dim() {
        return Err(Error::InvalidArgument(format!(
            "anchor has dimension {}, system has {}",
            z.len(),
            system.dim()
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold t = {t} must be >= 0")));
    }
    let mut anchor = z.to_vec();
    if linalg::normalize(&mut anchor) == 0.0 {
        return Err(Error::InvalidArgument("anchor must be nonzero".into()));
    }
    let d = system.dim();
    let leaves = expand_tree(
        system,
        (anchor.clone(), 0.0f64),
        cap,
        "stopping set",
        |(dir, sigma), _w, j| {
            let mut next = vec![0.0; d];
            system.map(j).linear.apply_transpose(dir, &mut next);
            let step = linalg::normalize(&mut next).ln();
            let s = sigma + step;
            ((next, s), -s > t)
        },
    )?;
    let (words, cocycles) = leaves.into_iter().map(|(w, (_, s))| (w, s)).unzip();
    Ok(StoppingSet {
        anchor,
        threshold: t,
        words,
        cocycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::AffineMap;
    use crate::catalog::{proximal_pair, random_system};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn halving_pair(c: f64) -> AffineSystem {
        AffineSystem::new(
            vec![
                AffineMap::new(Matrix::scalar(2, 0.5), vec![0.0, 0.0]),
                AffineMap::new(Matrix::scalar(2, 0.5), vec![c, 0.3 * c]),
            ],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn empty_and_single_letter() {
        let s = proximal_pair();
        let e = compose(&s, &[]).unwrap();
        assert_eq!(e.product(), &Matrix::identity(2));
        assert_eq!(e.translation(), &[0.0, 0.0]);
        assert_eq!(e.weight(), 1.0);
        let w = compose(&s, &[1]).unwrap();
        assert_eq!(w.product(), &s.map(1).linear);
        assert_eq!(w.translation(), s.map(1).translation.as_slice());
        assert_eq!(w.weight(), 0.5);
        assert!(matches!(
            compose(&s, &[0, 2]),
            Err(Error::IndexOutOfRange { letter: 2, n_maps: 2 })
        ));
    }

    #[test]
    fn compose_matches_pointwise_composition() {
        let c = 1.7;
        let s = halving_pair(c);
        let w = compose(&s, &[0, 1]).unwrap();
        assert!(w.product().max_abs_diff(&Matrix::scalar(2, 0.25)) < 1e-15);
        assert!((w.translation()[0] - c / 2.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let direct = s.map(0).apply_vec(&s.map(1).apply_vec(&x));
            let via = w.apply(&x);
            assert!(linalg::distance(&direct, &via) < 1e-14);
        }
    }

    #[test]
    fn norm_family_at_one_is_alphabet() {
        let s = proximal_pair();
        let fam = norm_family(&s, 1.0, DEFAULT_NODE_CAP).unwrap();
        let letters: Vec<_> = fam.iter().map(|w| w.letters().to_vec()).collect();
        assert_eq!(letters, vec![vec![0], vec![1]]);
    }

    /// Exhaustive expansion: a word of length n has norm rho^n.
    #[test]
    fn norm_family_homogeneous_lengths() {
        let rho = 0.5;
        let s = AffineSystem::new(
            vec![
                AffineMap::new(Matrix::scaled_rotation(rho, 0.4), vec![0.0, 0.0]),
                AffineMap::new(Matrix::scaled_rotation(rho, 2.0), vec![1.0, 0.0]),
                AffineMap::new(Matrix::scalar(2, rho), vec![0.0, 1.0]),
            ],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        for r in [0.9, 0.3, 0.07, 0.01] {
            // smallest n with rho^n < r, found by walking n upward
            let mut n = 0;
            while rho.powi(n) >= r {
                n += 1;
            }
            let fam = norm_family(&s, r, DEFAULT_NODE_CAP).unwrap();
            assert_eq!(fam.len(), 3usize.pow(n as u32));
            assert!(fam.iter().all(|w| w.len() == n as usize));
            assert!((fam.iter().map(|w| w.weight()).sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(n as f64, (r.ln() / rho.ln()).ceil());
        }
    }

    #[test]
    fn norm_family_conditions_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let s = random_system(&mut rng, 2, 3, 0.2, 0.7);
            let fam = norm_family(&s, 0.05, DEFAULT_NODE_CAP).unwrap();
            let total: f64 = fam.iter().map(|w| w.weight()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for w in &fam {
                assert!(w.product().op_norm() < 0.05);
                let parent = compose(&s, &w.letters()[..w.len() - 1]).unwrap();
                assert!(parent.product().op_norm() >= 0.05);
            }
            assert_prefix_free(&fam);
        }
    }

    #[test]
    fn norm_family_budget() {
        let s = proximal_pair();
        assert!(matches!(
            norm_family(&s, 1e-6, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    fn assert_prefix_free(words: &[Word]) {
        // sorted lexicographically, so a prefix would sit right before its extension
        for pair in words.windows(2) {
            assert!(pair[0].letters() < pair[1].letters());
            assert!(!pair[0].is_prefix_of(&pair[1]));
        }
    }

    #[test]
    fn stopping_set_at_zero_is_alphabet() {
        let s = proximal_pair();
        let st = stopping_set(&s, &[0.6, 0.8], 0.0, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(st.len(), 2);
        assert!(st.words().iter().all(|w| w.len() == 1));
    }

    /// Scaled rotations: sigma along any word of length n is exactly n log rho.
    #[test]
    fn stopping_set_conformal_lengths() {
        let rho: f64 = 0.6;
        let s = AffineSystem::new(
            vec![
                AffineMap::new(Matrix::scaled_rotation(rho, 0.3), vec![0.0, 0.0]),
                AffineMap::new(Matrix::scaled_rotation(rho, -1.1), vec![1.0, 0.0]),
            ],
            vec![0.4, 0.6],
        )
        .unwrap();
        for t in [0.1, 1.3, 2.9, 4.7] {
            // direct simulation of sigma = n log rho
            let mut n = 0usize;
            let mut sigma = 0.0;
            while -sigma <= t {
                n += 1;
                sigma = n as f64 * rho.ln();
            }
            assert_eq!(n, (t / -rho.ln()).floor() as usize + 1);
            let st = stopping_set(&s, &[1.0, 0.0], t, DEFAULT_NODE_CAP).unwrap();
            assert!(st.words().iter().all(|w| w.len() == n));
            assert_eq!(st.len(), 1 << n);
        }
    }

    #[test]
    fn incremental_cocycle_matches_direct() {
        let s = proximal_pair();
        let z = [0.28, -0.96];
        let st = stopping_set(&s, &z, 12.0, DEFAULT_NODE_CAP).unwrap();
        for (w, sigma) in st.words().iter().zip(st.cocycles()).step_by(97) {
            let v = w.product().transpose().apply_vec(&z);
            let direct = linalg::norm(&v).ln();
            let tol = 1e-12 * (w.len() as f64 / 30.0).ceil().max(1.0);
            assert!((direct - sigma).abs() <= tol, "{direct} vs {sigma}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn stopping_set_partition(theta in 0.0..std::f64::consts::TAU, t in 0.0..6.0f64) {
            let s = proximal_pair();
            let z = [theta.cos(), theta.sin()];
            let st = stopping_set(&s, &z, t, DEFAULT_NODE_CAP).unwrap();
            prop_assert!((st.total_weight() - 1.0).abs() < 1e-10);
            for (w, sigma) in st.words().iter().zip(st.cocycles()) {
                prop_assert!(-sigma > t);
                let parent = compose(&s, &w.letters()[..w.len() - 1]).unwrap();
                let ps = linalg::norm(&parent.product().transpose().apply_vec(&z)).ln();
                prop_assert!(-ps <= t + 1e-12);
            }
        }

        #[test]
        fn compose_is_a_monoid_homomorphism(
            u in proptest::collection::vec(0usize..2, 0..12),
            v in proptest::collection::vec(0usize..2, 0..12),
        ) {
            let s = proximal_pair();
            let wu = compose(&s, &u).unwrap();
            let wv = compose(&s, &v).unwrap();
            let mut uv = u.clone();
            uv.extend_from_slice(&v);
            let whole = compose(&s, &uv).unwrap();
            let joined = wu.concat(&wv);
            prop_assert!(whole.product().max_abs_diff(joined.product()) <= 1e-12);
            prop_assert!(linalg::distance(whole.translation(), joined.translation()) <= 1e-12);
            prop_assert!((whole.weight() - joined.weight()).abs() <= 1e-15);
        }
    }
}
