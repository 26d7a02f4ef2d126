//! Affine iterated function systems: raw input, validation, and the
//! invariant bounding ball of the attractor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::linalg::{self, Matrix};

/// Tolerance on `sum p_j = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One map of the raw system file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMap {
    #[serde(rename = "A")]
    pub linear: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub p: f64,
}

/// The JSON system file: `{"dim": d, "maps": [{"A": [[..]], "b": [..], "p": ..}, ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub dim: usize,
    pub maps: Vec<RawMap>,
}

impl RawSystem {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<AffineSystem> {
        validate(self)
    }
}

/// `x -> A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix,
    pub translation: Vec<f64>,
}

impl AffineMap {
    pub fn new(linear: Matrix, translation: Vec<f64>) -> Self {
        assert_eq!(linear.dim(), translation.len());
        AffineMap {
            linear,
            translation,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.linear.apply(x, out);
        for (o, b) in out.iter_mut().zip(&self.translation) {
            *o += b;
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }

    /// The unique fixed point `(Id - A)^{-1} b`; `None` if `Id - A` is singular.
    pub fn fixed_point(&self) -> Option<Vec<f64>> {
        let d = self.linear.dim();
        Matrix::identity(d)
            .sub(&self.linear)
            .solve(&self.translation)
    }
}

/// A validated weighted affine IFS `{(A_j, b_j, p_j)}`.
///
/// Immutable after construction; cached per-map operator norms and smallest
/// singular values are used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem {
    dim: usize,
    maps: Vec<AffineMap>,
    weights: Vec<f64>,
    norms: Vec<f64>,
    min_singular: Vec<f64>,
    singleton: bool,
}

impl AffineSystem {
    /// Validates and builds a system from parts.
    pub fn new(maps: Vec<AffineMap>, weights: Vec<f64>) -> Result<Self> {
        let raw = RawSystem {
            dim: maps.first().map(|m| m.linear.dim()).unwrap_or(0),
            maps: maps
                .iter()
                .zip(weights.iter().chain(std::iter::repeat(&f64::NAN)))
                .map(|(m, p)| RawMap {
                    linear: m.linear.rows(),
                    b: m.translation.clone(),
                    p: *p,
                })
                .collect(),
        };
        if weights.len() != maps.len() {
            return Err(Error::Invalid(vec![Violation::DimensionMismatch {
                index: maps.len().min(weights.len()),
                what: "weights",
                expected: maps.len(),
                found: weights.len(),
            }]));
        }
        validate(&raw)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    #[inline]
    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    #[inline]
    pub fn map(&self, j: usize) -> &AffineMap {
        &self.maps[j]
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Operator norms `||A_j||`.
    #[inline]
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest singular values of the `A_j`.
    pub fn min_singular_values(&self) -> &[f64] {
        &self.min_singular
    }

    /// All maps share one fixed point, so the attractor is a single point.
    pub fn is_singleton(&self) -> bool {
        self.singleton
    }

    pub fn linear_parts(&self) -> impl Iterator<Item = &Matrix> {
        self.maps.iter().map(|m| &m.linear)
    }

    /// The system conjugated by `x -> x + v`: `b_j -> b_j + (Id - A_j) v`.
    /// Its attractor and measure are those of `self` shifted by `v`.
    pub fn translated(&self, v: &[f64]) -> AffineSystem {
        let mut out = self.clone();
        for m in &mut out.maps {
            let av = m.linear.apply_vec(v);
            for ((b, dv), adv) in m.translation.iter_mut().zip(v).zip(av) {
                *b += dv - adv;
            }
        }
        out.singleton = detect_singleton(&out.maps);
        out
    }

    pub fn to_raw(&self) -> RawSystem {
        RawSystem {
            dim: self.dim,
            maps: self
                .maps
                .iter()
                .zip(&self.weights)
                .map(|(m, p)| RawMap {
                    linear: m.linear.rows(),
                    b: m.translation.clone(),
                    p: *p,
                })
                .collect(),
        }
    }

    /// Default chaos-game burn-in: `ceil(log(1e-12) / log(max ||A_j||))`.
    pub fn default_burn_in(&self) -> usize {
        let rho = self.max_norm();
        if rho <= 0.0 {
            return 1;
        }
        (1e-12f64.ln() / rho.ln()).ceil().max(1.0) as usize
    }

    /// Bounding ball `B(c, R)` of the attractor, centred at `center`, with
    /// `R = max_j |b_j - (Id - A_j) c| / (1 - max_j ||A_j||)`.
    ///
    /// Every `f_j` maps the ball into itself.
    pub fn ball_about(&self, center: &[f64]) -> f64 {
        let d = self.dim;
        let mut img = vec![0.0; d];
        let spread = self
            .maps
            .iter()
            .map(|m| {
                m.apply(center, &mut img);
                linalg::distance(&img, center)
            })
            .fold(0.0, f64::max);
        spread / (1.0 - self.max_norm())
    }

    /// Invariant ball around the fixed point of the first map.
    pub fn attractor_ball(&self) -> (Vec<f64>, f64) {
        let c = self.maps[0]
            .fixed_point()
            .expect("contraction has a fixed point");
        let r = self.ball_about(&c);
        (c, r)
    }
}

fn detect_singleton(maps: &[AffineMap]) -> bool {
    let Some(x) = maps[0].fixed_point() else {
        return false;
    };
    let scale = 1.0 + linalg::norm(&x);
    maps.iter()
        .all(|m| linalg::distance(&m.apply_vec(&x), &x) <= 1e-12 * scale)
}

/// Validates raw data, collecting every violated constraint.
pub fn validate(raw: &RawSystem) -> Result<AffineSystem> {
    let d = raw.dim;
    let mut violations = Vec::new();
    if d < 2 {
        violations.push(Violation::BadDimension(d));
    }
    if raw.maps.is_empty() {
        violations.push(Violation::Empty);
    }
    let single = raw.maps.len() == 1;
    let mut maps = Vec::with_capacity(raw.maps.len());
    let mut norms = Vec::new();
    let mut min_singular = Vec::new();
    for (index, m) in raw.maps.iter().enumerate() {
        let rows_ok = m.linear.len() == d && m.linear.iter().all(|r| r.len() == d);
        if !rows_ok {
            let found = m
                .linear
                .iter()
                .map(|r| r.len())
                .find(|&l| l != d)
                .unwrap_or(m.linear.len());
            violations.push(Violation::DimensionMismatch {
                index,
                what: "A",
                expected: d,
                found,
            });
        }
        if m.b.len() != d {
            violations.push(Violation::DimensionMismatch {
                index,
                what: "b",
                expected: d,
                found: m.b.len(),
            });
        }
        // a lone map necessarily carries the whole mass
        let weight_ok = if single {
            (m.p - 1.0).abs() <= WEIGHT_SUM_TOL
        } else {
            m.p > 0.0 && m.p < 1.0
        };
        if !weight_ok {
            violations.push(Violation::WeightOutOfRange {
                index,
                weight: m.p,
            });
        }
        if !rows_ok || m.b.len() != d || d == 0 {
            continue;
        }
        let a = Matrix::from_rows(&m.linear).unwrap();
        if !a.is_finite() || m.b.iter().any(|x| !x.is_finite()) {
            violations.push(Violation::NonFinite { index });
            continue;
        }
        let sv = a.singular_values();
        let norm = sv[0];
        if norm >= 1.0 {
            violations.push(Violation::NonContractive { index, norm });
        }
        let det = a.det();
        if det.abs() <= 1e-12 * norm.powi(d as i32).max(f64::MIN_POSITIVE) || norm == 0.0 {
            violations.push(Violation::Singular { index, det });
        }
        norms.push(norm);
        min_singular.push(*sv.last().unwrap());
        maps.push(AffineMap::new(a, m.b.clone()));
    }
    let sum: f64 = raw.maps.iter().map(|m| m.p).sum();
    if !single && !raw.maps.is_empty() && (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        violations.push(Violation::WeightSum { sum });
    }
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let singleton = detect_singleton(&maps);
    Ok(AffineSystem {
        dim: d,
        weights: raw.maps.iter().map(|m| m.p).collect(),
        maps,
        norms,
        min_singular,
        singleton,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ViolationKind;

    fn cantor_raw(p2: f64) -> RawSystem {
        RawSystem {
            dim: 2,
            maps: vec![
                RawMap {
                    linear: vec![vec![1.0 / 3.0, 0.0], vec![0.0, 1.0 / 3.0]],
                    b: vec![0.0, 0.0],
                    p: 0.5,
                },
                RawMap {
                    linear: vec![vec![1.0 / 3.0, 0.0], vec![0.0, 1.0 / 3.0]],
                    b: vec![2.0 / 3.0, 0.0],
                    p: p2,
                },
            ],
        }
    }

    fn kinds(e: Error) -> Vec<ViolationKind> {
        match e {
            Error::Invalid(v) => v.iter().map(|x| x.kind()).collect(),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn accepts_cantor_product() {
        let s = validate(&cantor_raw(0.5)).unwrap();
        assert_eq!(s.len(), 2);
        assert!(!s.is_singleton());
    }

    #[test]
    fn rejects_bad_weight_sum() {
        assert_eq!(kinds(validate(&cantor_raw(0.4)).unwrap_err()), vec![ViolationKind::BadWeights]);
    }

    #[test]
    fn rejects_non_contractive() {
        let mut raw = cantor_raw(0.5);
        raw.maps[0].linear = vec![vec![1.2, 0.0], vec![0.0, 0.3]];
        assert_eq!(kinds(validate(&raw).unwrap_err()), vec![ViolationKind::NonContractive]);
    }

    #[test]
    fn rejects_singular_and_lists_everything() {
        let mut raw = cantor_raw(0.7);
        raw.maps[0].linear = vec![vec![0.5, 0.5], vec![0.25, 0.25]];
        raw.maps[1].b = vec![1.0];
        let k = kinds(validate(&raw).unwrap_err());
        assert!(k.contains(&ViolationKind::Singular));
        assert!(k.contains(&ViolationKind::BadWeights));
        assert!(k.contains(&ViolationKind::DimensionMismatch));
    }

    #[test]
    fn rejects_one_dimensional_systems() {
        let raw = RawSystem {
            dim: 1,
            maps: vec![RawMap {
                linear: vec![vec![0.5]],
                b: vec![0.0],
                p: 1.0,
            }],
        };
        assert_eq!(kinds(validate(&raw).unwrap_err()), vec![ViolationKind::DimensionMismatch]);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let ok = r#"{"dim":2,"maps":[{"A":[[0.5,0],[0,0.5]],"b":[1,0],"p":1}]}"#;
        assert!(RawSystem::from_json(ok).is_ok());
        let bad = r#"{"dim":2,"maps":[{"A":[[0.5,0],[0,0.5]],"b":[1,0],"p":1,"q":2}]}"#;
        assert!(matches!(RawSystem::from_json(bad), Err(Error::Parse(_))));
        let bad = r#"{"dim":2,"extra":1,"maps":[]}"#;
        assert!(RawSystem::from_json(bad).is_err());
    }

    #[test]
    fn single_map_ball_is_its_fixed_point() {
        let s = AffineSystem::new(
            vec![AffineMap::new(Matrix::scalar(2, 0.5), vec![1.0, 0.0])],
            vec![1.0],
        )
        .unwrap();
        let (c, r) = s.attractor_ball();
        assert!((c[0] - 2.0).abs() < 1e-15 && c[1].abs() < 1e-15);
        assert_eq!(r, 0.0);
        assert!(s.is_singleton());
    }

    #[test]
    fn shared_fixed_point_is_flagged() {
        let s = AffineSystem::new(
            vec![
                AffineMap::new(Matrix::scalar(2, 0.5), vec![0.0, 0.0]),
                AffineMap::new(Matrix::scaled_rotation(0.3, 1.0), vec![0.0, 0.0]),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(s.is_singleton());
    }

    #[test]
    fn ball_is_invariant_on_boundary_samples() {
        let s = validate(&cantor_raw(0.5)).unwrap();
        let (c, r) = s.attractor_ball();
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            let x = [c[0] + r * th.cos(), c[1] + r * th.sin()];
            for m in s.maps() {
                assert!(linalg::distance(&m.apply_vec(&x), &c) <= r * (1.0 + 1e-12));
            }
        }
    }
}
