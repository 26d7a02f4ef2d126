//! The random walk of the transposed linear parts on the unit sphere.
//!
//! The law is `lambda = sum_j p_j delta_{A_j^T}`; the walk is
//! `S_n x = X_n ... X_1 x` (normalised), with the norm cocycle
//! `sigma(g, x) = log |g x|` for unit `x`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::linalg::{self, Matrix};
use crate::rng;

/// A unit vector in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Normalises `v`; `None` for the zero vector.
    pub fn new(mut v: Vec<f64>) -> Option<Self> {
        let n = linalg::normalize(&mut v);
        (n > 0.0 && n.is_finite()).then_some(SpherePoint(v))
    }

    pub fn from_angle(theta: f64) -> Self {
        SpherePoint(vec![theta.cos(), theta.sin()])
    }

    pub fn axis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        SpherePoint(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn antipode(&self) -> Self {
        SpherePoint(self.0.iter().map(|x| -x).collect())
    }

    /// `g x` on the sphere and the cocycle `sigma(g, x)`.
    pub fn act(&self, g: &Matrix) -> (SpherePoint, f64) {
        let mut v = g.apply_vec(&self.0);
        let n = linalg::normalize(&mut v);
        (SpherePoint(v), n.ln())
    }
}

/// `sigma(g, x) = log(|g v| / |v|)` for `v` on the ray of `x`.
pub fn cocycle(g: &Matrix, x: &SpherePoint) -> Result<f64> {
    if g.det() == 0.0 {
        return Err(Error::Singular);
    }
    let n = linalg::norm(&g.apply_vec(x.coords()));
    if n == 0.0 {
        return Err(Error::Singular);
    }
    Ok(n.ln())
}

/// `lambda = sum_j p_j delta_{g_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkLaw {
    matrices: Vec<Matrix>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WalkLaw {
    pub fn new(matrices: Vec<Matrix>, weights: Vec<f64>) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "a walk law needs one weight per matrix".into(),
            ));
        }
        let d = matrices[0].dim();
        if matrices.iter().any(|m| m.dim() != d) {
            return Err(Error::InvalidArgument("matrices differ in dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("weights must be positive and sum to 1".into()));
        }
        if matrices.iter().any(|m| m.det() == 0.0) {
            return Err(Error::Singular);
        }
        let cumulative = rng::cumulative(&weights);
        Ok(WalkLaw {
            matrices,
            weights,
            cumulative,
        })
    }

    /// `lambda = sum_j p_j delta_{A_j^T}`.
    pub fn from_system(system: &AffineSystem) -> Self {
        WalkLaw::new(
            system.linear_parts().map(|a| a.transpose()).collect(),
            system.weights().to_vec(),
        )
        .expect("validated system")
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].dim()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        rng::pick(&self.cumulative, rng.random::<f64>())
    }

    /// One step: `x <- g_j x`, returning `sigma(g_j, x)`.
    #[inline]
    pub(crate) fn step(&self, j: usize, x: &mut [f64], buf: &mut [f64]) -> f64 {
        self.matrices[j].apply(x, buf);
        let n = linalg::normalize(buf);
        x.copy_from_slice(buf);
        n.ln()
    }

    pub fn max_norm(&self) -> f64 {
        self.matrices.iter().map(|m| m.op_norm()).fold(0.0, f64::max)
    }

    /// `min_j log(smallest singular value of g_j)`: no single step can lower
    /// the cocycle by more than this.
    pub fn min_log_singular(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| m.min_singular_value().ln())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Lyapunov estimate with a half-width of twice the standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub half_width: f64,
}

/// Renormalisation period for running products.
const RENORM: usize = 32;

/// `(1/n) log ||g_n ... g_1||` averaged over independent trajectories.
pub fn lyapunov(law: &WalkLaw, n_steps: usize, n_trajectories: usize, seed: u64) -> Result<LyapunovEstimate> {
    if n_steps < 100 {
        return Err(Error::InvalidArgument(format!("n_steps = {n_steps} must be >= 100")));
    }
    if n_trajectories == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    let d = law.dim();
    let values: Vec<f64> = (0..n_trajectories)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let mut prod = Matrix::identity(d);
            let mut log_scale = 0.0;
            for step in 1..=n_steps {
                let j = law.sample(&mut r);
                prod = law.matrices[j].mul(&prod);
                if step % RENORM == 0 {
                    let s = prod.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    prod = prod.scaled(1.0 / s);
                    log_scale += s.ln();
                }
            }
            (log_scale + prod.op_norm().ln()) / n_steps as f64
        })
        .collect();
    let n = values.len() as f64;
    // shifted sums: identical trajectories give exactly zero variance
    let v0 = values[0];
    let s1: f64 = values.iter().map(|v| v - v0).sum();
    let s2: f64 = values.iter().map(|v| (v - v0) * (v - v0)).sum();
    let mean = v0 + s1 / n;
    let var = if values.len() > 1 {
        ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        value: mean,
        half_width: 2.0 * (var / n).sqrt(),
    })
}

/// A numerically invariant proper cone found by [`detect_cone`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cone {
    /// Counter-clockwise arc `[start, start + width]` of the circle.
    Arc { start: f64, width: f64 },
    /// Spherical cap bounding the cone's rays: centre and angular radius.
    Cap { center: Vec<f64>, radius: f64 },
}

impl Cone {
    /// Angular width (twice the radius for caps).
    pub fn width(&self) -> f64 {
        match self {
            Cone::Arc { width, .. } => *width,
            Cone::Cap { radius, .. } => 2.0 * radius,
        }
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        match self {
            Cone::Arc { start, width } => {
                let a = (x[1].atan2(x[0]) - start).rem_euclid(TAU);
                a <= width + slack || a >= TAU - slack
            }
            Cone::Cap { center, radius } => {
                linalg::dot(center, x).clamp(-1.0, 1.0).acos() <= radius + slack
            }
        }
    }

    /// A direction inside the cone.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Cone::Arc { start, width } => {
                let a = start + 0.5 * width;
                vec![a.cos(), a.sin()]
            }
            Cone::Cap { center, .. } => center.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub preserved: bool,
    pub cone: Option<Cone>,
    /// Largest angular width reached by any trial (`>= pi` means blow-up).
    pub max_width: f64,
    pub iterations: usize,
    pub witness: String,
}

const CONE_TOL: f64 = 1e-6;

/// Smallest arc containing a union of arcs `(start, width)`, each `< pi`;
/// `None` when the union is not contained in any arc shorter than `pi`.
fn arc_hull(arcs: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut iv: Vec<(f64, f64)> = arcs
        .iter()
        .map(|&(s, w)| {
            let s = s.rem_euclid(TAU);
            (s, s + w)
        })
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    // merge on the unrolled line, then check the wrap-around gap
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in iv {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    // covered circle fraction could wrap past 2 pi into the first intervals
    let first_start = merged[0].0;
    let last_end = merged[merged.len() - 1].1;
    let mut best_gap = first_start + TAU - last_end;
    let mut gap_end = first_start;
    for w in merged.windows(2) {
        let g = w[1].0 - w[0].1;
        if g > best_gap {
            best_gap = g;
            gap_end = w[1].0;
        }
    }
    let width = TAU - best_gap.max(0.0);
    if width >= PI {
        return None;
    }
    Some((gap_end.rem_euclid(TAU), width))
}

fn arc_image(m: &Matrix, (start, width): (f64, f64)) -> (f64, f64) {
    let a = m.apply_vec(&[start.cos(), start.sin()]);
    let b = m.apply_vec(&[(start + width).cos(), (start + width).sin()]);
    let (ta, tb) = (a[1].atan2(a[0]), b[1].atan2(b[0]));
    if m.det() > 0.0 {
        (ta, (tb - ta).rem_euclid(TAU))
    } else {
        (tb, (ta - tb).rem_euclid(TAU))
    }
}

fn iterate_arc(law: &WalkLaw, start: (f64, f64), max_iter: usize) -> (Option<(f64, f64)>, usize, f64) {
    let mut cur = start;
    for it in 1..=max_iter {
        let mut arcs = vec![cur];
        arcs.extend(law.matrices.iter().map(|m| arc_image(m, cur)));
        match arc_hull(&arcs) {
            None => return (None, it, PI),
            Some(next) => {
                let moved = (next.0 - cur.0).abs().min(TAU - (next.0 - cur.0).abs());
                let grew = next.1 - cur.1;
                cur = next;
                if moved < CONE_TOL && grew.abs() < CONE_TOL {
                    return (Some(cur), it, cur.1);
                }
            }
        }
    }
    (None, max_iter, cur.1)
}

/// Approximate smallest enclosing cap of unit rays (Badoiu-Clarkson on the sphere).
fn enclosing_cap(rays: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let d = rays[0].len();
    let mut c = vec![0.0; d];
    for r in rays {
        for (a, x) in c.iter_mut().zip(r) {
            *a += x;
        }
    }
    if linalg::normalize(&mut c) == 0.0 {
        return (rays[0].clone(), PI);
    }
    let angle = |c: &[f64], r: &[f64]| linalg::dot(c, r).clamp(-1.0, 1.0).acos();
    for k in 1..=300 {
        let far = rays
            .iter()
            .max_by(|a, b| angle(&c, a).total_cmp(&angle(&c, b)))
            .unwrap();
        let step = 1.0 / (k as f64 + 1.0);
        for (a, x) in c.iter_mut().zip(far) {
            *a += step * (x - *a);
        }
        if linalg::normalize(&mut c) == 0.0 {
            return (rays[0].clone(), PI);
        }
    }
    let radius = rays.iter().map(|r| angle(&c, r)).fold(0.0, f64::max);
    (c, radius)
}

const MAX_RAYS: usize = 256;

fn iterate_rays(law: &WalkLaw, start: Vec<Vec<f64>>, max_iter: usize) -> (Option<Cone>, usize, f64) {
    let mut rays = start;
    let mut prev_radius = f64::NAN;
    for it in 1..=max_iter {
        let mut next = rays.clone();
        for m in &law.matrices {
            for r in &rays {
                let mut v = m.apply_vec(r);
                linalg::normalize(&mut v);
                next.push(v);
            }
        }
        let (c, radius) = enclosing_cap(&next);
        if radius >= 0.5 * PI {
            return (None, it, 2.0 * radius);
        }
        // keep the rays farthest from the centre: they carry the support function
        next.sort_by(|a, b| linalg::dot(&c, a).total_cmp(&linalg::dot(&c, b)));
        next.truncate(MAX_RAYS);
        rays = next;
        if (radius - prev_radius).abs() < CONE_TOL {
            return (
                Some(Cone::Cap {
                    center: c,
                    radius,
                }),
                it,
                2.0 * radius,
            );
        }
        prev_radius = radius;
    }
    (None, max_iter, 2.0 * prev_radius)
}

/// Searches for a proper convex cone invariant under every matrix of the law.
///
/// Trial cones (the positive orthant, thin cones about the dominant real
/// eigenvectors of the generators and their antipodes, and a few
/// deterministic random thin cones) are replaced by the hull of themselves and
/// their images until the hull stabilises (preserved) or its angular width
/// reaches `pi` (blow-up). In `d = 2` hulls are exact arcs; in higher `d` a
/// bounded set of extreme rays and its enclosing cap stand in for the hull.
pub fn detect_cone(law: &WalkLaw, max_iter: usize) -> Result<ConeReport> {
    let d = law.dim();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut orthant = vec![1.0; d];
    linalg::normalize(&mut orthant);
    starts.push(orthant);
    for m in &law.matrices {
        let ev = m.eigenvalues();
        if ev[0].im == 0.0 && (ev.len() < 2 || ev[0].norm() > ev[1].norm() * (1.0 + 1e-9)) {
            let v = m.real_eigenvector(ev[0].re);
            starts.push(v.iter().map(|x| -x).collect());
            starts.push(v);
        }
    }
    let mut r = rng::stream(0x636f_6e65, 0);
    for _ in 0..4 {
        let mut v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        linalg::normalize(&mut v);
        starts.push(v);
    }
    let mut max_width: f64 = 0.0;
    let mut total_iter = 0;
    let mut inconclusive = false;
    for (k, s) in starts.iter().enumerate() {
        let (cone, iters, width) = if d == 2 {
            let (a, w) = if k == 0 {
                (0.0, 0.5 * PI)
            } else {
                (s[1].atan2(s[0]) - 1e-3, 2e-3)
            };
            let (arc, it, width) = iterate_arc(law, (a, w), max_iter);
            (arc.map(|(start, width)| Cone::Arc { start, width }), it, width)
        } else {
            let rays = if k == 0 {
                (0..d).map(|i| SpherePoint::axis(d, i).0).collect()
            } else {
                thin_simplex(s, 1e-3)
            };
            iterate_rays(law, rays, max_iter)
        };
        total_iter += iters;
        max_width = max_width.max(width);
        if let Some(cone) = cone {
            return Ok(ConeReport {
                preserved: true,
                witness: format!(
                    "trial cone {k} stabilised after {iters} iterations at angular width {:.6}",
                    cone.width()
                ),
                cone: Some(cone),
                max_width,
                iterations: total_iter,
            });
        }
        if width < PI - CONE_TOL {
            inconclusive = true;
        }
    }
    if inconclusive {
        return Err(Error::Inconclusive {
            iterations: total_iter,
            width: max_width,
        });
    }
    Ok(ConeReport {
        preserved: false,
        cone: None,
        max_width,
        iterations: total_iter,
        witness: format!(
            "all {} trial cones blew up to angular width pi",
            starts.len()
        ),
    })
}

/// `d` rays within angle `eps` of `v`.
fn thin_simplex(v: &[f64], eps: f64) -> Vec<Vec<f64>> {
    let d = v.len();
    (0..d)
        .map(|i| {
            let mut r = v.to_vec();
            r[i] += eps;
            for (k, x) in r.iter_mut().enumerate() {
                if k != i {
                    *x -= eps / d as f64;
                }
            }
            linalg::normalize(&mut r);
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub trajectory_length: usize,
    pub burn_in: usize,
    /// `"unique"` or `"mixture"` (two ergodic components).
    pub component: String,
    /// Estimated `(p1(x0), p2(x0))` for a mixture.
    pub component_weights: Option<(f64, f64)>,
    pub start: Vec<f64>,
    /// Largest difference of test-function means between the runs from `x0`
    /// and `-x0` (unique case only).
    pub antipodal_discrepancy: Option<f64>,
}

/// Weighted atoms on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSphereMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    pub provenance: Provenance,
}

impl EmpiricalSphereMeasure {
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>, provenance: Provenance) -> Self {
        assert_eq!(atoms.len(), dim * weights.len());
        let cumulative = rng::cumulative(&weights);
        EmpiricalSphereMeasure {
            dim,
            atoms,
            weights,
            cumulative,
            provenance,
        }
    }

    pub fn uniform(dim: usize, atoms: Vec<f64>, provenance: Provenance) -> Self {
        let n = atoms.len() / dim;
        Self::new(dim, atoms, vec![1.0 / n as f64; n], provenance)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.dim..(k + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.atoms.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws an atom index with probability equal to its weight.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        rng::pick(&self.cumulative, rng.random::<f64>())
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }

    /// CSV with columns `coord_1..coord_d, weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 1..=self.dim {
            let _ = write!(out, "coord_{i},");
        }
        out.push_str("weight\n");
        for (x, w) in self.atoms() {
            for c in x {
                let _ = write!(out, "{c},");
            }
            let _ = writeln!(out, "{w}");
        }
        out
    }

    /// The JSON sidecar carrying the provenance.
    pub fn provenance_json(&self) -> String {
        serde_json::to_string_pretty(&self.provenance).expect("provenance serialises")
    }
}

/// Runs chains of [`rng::CHUNK`] atoms each from `x0`; chain `k` uses stream
/// `k`. Returns the concatenated atoms.
fn birkhoff_atoms(law: &WalkLaw, x0: &[f64], burn_in: usize, n_atoms: usize, seed: u64) -> Vec<f64> {
    let d = law.dim();
    rng::chunked(n_atoms, rng::CHUNK, seed, |_, len, r| {
        let mut x = x0.to_vec();
        let mut buf = vec![0.0; d];
        let mut out = Vec::with_capacity(len * d);
        for step in 0..burn_in + len {
            let j = law.sample(r);
            law.step(j, &mut x, &mut buf);
            if step >= burn_in {
                out.extend_from_slice(&x);
            }
        }
        out
    })
    .concat()
}

/// Smooth test functions used for antipodal agreement.
fn probe(k: usize, x: &[f64]) -> f64 {
    let i = k % x.len();
    match k / x.len() {
        0 => x[i],
        1 => x[i] * x[i],
        _ => (3.0 * x[i]).sin(),
    }
}

/// Trajectories used to estimate absorption frequencies.
const ABSORPTION_RUNS: usize = 2000;

/// Empirical stationary measure `nu_x0` of the walk.
///
/// Without an invariant cone the measure is unique and the Birkhoff atoms of
/// chains from `x0` estimate it; the chains from `-x0` are run as a check.
/// With an invariant proper cone `C` there are two ergodic components
/// supported in `C` and `-C`; `p1(x0)` and `p2(x0)` are estimated as the
/// fractions of trajectories from `x0` absorbed into `C` and `-C`, and the
/// returned atoms are the mixture `p1 nu_1 + p2 nu_2`.
pub fn stationary(
    law: &WalkLaw,
    x0: &SpherePoint,
    burn_in: usize,
    n_atoms: usize,
    seed: u64,
) -> Result<EmpiricalSphereMeasure> {
    let d = law.dim();
    if x0.dim() != d {
        return Err(Error::InvalidArgument("start point has the wrong dimension".into()));
    }
    if n_atoms == 0 {
        return Err(Error::InvalidArgument("n_atoms must be positive".into()));
    }
    let report = detect_cone(law, 10_000)?;
    let mut provenance = Provenance {
        seed,
        trajectory_length: rng::CHUNK.min(n_atoms),
        burn_in,
        component: "unique".into(),
        component_weights: None,
        start: x0.coords().to_vec(),
        antipodal_discrepancy: None,
    };
    match report.cone {
        None => {
            let atoms = birkhoff_atoms(law, x0.coords(), burn_in, n_atoms, seed);
            let anti = birkhoff_atoms(law, x0.antipode().coords(), burn_in, n_atoms, rng::derive_seed(seed, 1));
            let n = n_atoms as f64;
            let discrepancy = (0..3 * d)
                .map(|k| {
                    let a: f64 = atoms.chunks_exact(d).map(|x| probe(k, x)).sum::<f64>() / n;
                    let b: f64 = anti.chunks_exact(d).map(|x| probe(k, x)).sum::<f64>() / n;
                    (a - b).abs()
                })
                .fold(0.0, f64::max);
            provenance.antipodal_discrepancy = Some(discrepancy);
            Ok(EmpiricalSphereMeasure::uniform(d, atoms, provenance))
        }
        Some(cone) => {
            let inside = cone.center();
            let absorbed: Vec<bool> = (0..ABSORPTION_RUNS)
                .into_par_iter()
                .map(|k| {
                    let mut r = rng::stream(rng::derive_seed(seed, 2), k as u64);
                    let mut x = x0.coords().to_vec();
                    let mut buf = vec![0.0; d];
                    for _ in 0..burn_in.max(200) {
                        if cone.contains(&x, 0.0) {
                            return true;
                        }
                        if cone.contains(&x.iter().map(|v| -v).collect::<Vec<_>>(), 0.0) {
                            return false;
                        }
                        let j = law.sample(&mut r);
                        law.step(j, &mut x, &mut buf);
                    }
                    linalg::dot(&x, &inside) >= 0.0
                })
                .collect();
            let p1 = absorbed.iter().filter(|&&a| a).count() as f64 / ABSORPTION_RUNS as f64;
            let p2 = 1.0 - p1;
            let first = birkhoff_atoms(law, &inside, burn_in, n_atoms, seed);
            let n = n_atoms as f64;
            let mut atoms = first.clone();
            atoms.extend(first.iter().map(|x| -x));
            let mut weights = vec![p1 / n; n_atoms];
            weights.extend(std::iter::repeat_n(p2 / n, n_atoms));
            provenance.component = "mixture".into();
            provenance.component_weights = Some((p1, p2));
            Ok(EmpiricalSphereMeasure::new(d, atoms, weights, provenance))
        }
    }
}

/// Worst-case hyperplane-neighbourhood masses and their power-law fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuivarchReport {
    pub alpha_hat: f64,
    pub c_hat: f64,
    /// `(r, max over hyperplanes of nu({x : d(x, Y) <= r}))`.
    pub table: Vec<(f64, f64)>,
    /// `false` when the fitted exponent is below [`REGULARITY_FLOOR`].
    pub regular: bool,
}

/// Fitted exponents below this are reported as a regularity failure.
pub const REGULARITY_FLOOR: f64 = 0.1;

/// Chordal distance from a unit vector to the great subsphere `n^perp`.
#[inline]
fn distance_to_hyperplane(x: &[f64], normal: &[f64]) -> f64 {
    let s = linalg::dot(x, normal).abs().min(1.0);
    (2.0 - 2.0 * (1.0 - s * s).sqrt()).max(0.0).sqrt()
}

/// Tabulates `max_Y nu(r-neighbourhood of Y)` over hyperplanes `Y` and fits
/// `log mass = log C + alpha log r`.
///
/// Half of the hyperplanes have uniform random unit normals; the other half
/// pass through `d - 1` randomly chosen atoms, which is what exposes a
/// measure sitting on a hyperplane.
pub fn guivarch_check(
    measure: &EmpiricalSphereMeasure,
    n_hyperplanes: usize,
    radii: &[f64],
    seed: u64,
) -> Result<GuivarchReport> {
    if measure.len() < 10 {
        return Err(Error::InsufficientSamples(format!(
            "{} atoms, need at least 10",
            measure.len()
        )));
    }
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
    }
    let d = measure.dim();
    let mut r = rng::stream(seed, 0);
    let normals: Vec<Vec<f64>> = (0..n_hyperplanes.max(2))
        .map(|k| {
            let mut g: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
            if k % 2 == 1 {
                // orthogonalise against d - 1 atoms
                let mut basis: Vec<Vec<f64>> = Vec::new();
                for _ in 0..d - 1 {
                    let mut a = measure.atom(measure.sample(&mut r)).to_vec();
                    for b in &basis {
                        let c = linalg::dot(&a, b);
                        a.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                    }
                    if linalg::normalize(&mut a) > 1e-12 {
                        basis.push(a);
                    }
                }
                for b in &basis {
                    let c = linalg::dot(&g, b);
                    g.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            linalg::normalize(&mut g);
            g
        })
        .collect();
    let table_rows: Vec<Vec<f64>> = normals
        .par_iter()
        .map(|n| {
            let mut dist: Vec<(f64, f64)> = measure
                .atoms()
                .map(|(x, w)| (distance_to_hyperplane(x, n), w))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            let cum: Vec<f64> = rng::cumulative(&dist.iter().map(|p| p.1).collect::<Vec<_>>());
            radii
                .iter()
                .map(|&rad| {
                    let k = dist.partition_point(|p| p.0 <= rad);
                    if k == 0 {
                        0.0
                    } else {
                        cum[k - 1]
                    }
                })
                .collect()
        })
        .collect();
    let table: Vec<(f64, f64)> = radii
        .iter()
        .enumerate()
        .map(|(i, &rad)| (rad, table_rows.iter().map(|row| row[i]).fold(0.0, f64::max)))
        .collect();
    let usable: Vec<&(f64, f64)> = table.iter().filter(|t| t.1 > 0.0).collect();
    if usable.len() < 2 {
        return Err(Error::InsufficientSamples(
            "fewer than two radii carry mass; use larger radii or more atoms".into(),
        ));
    }
    let lx: Vec<f64> = usable.iter().map(|t| t.0.ln()).collect();
    let ly: Vec<f64> = usable.iter().map(|t| t.1.min(1.0).ln()).collect();
    let (intercept, alpha_hat) = crate::fourier::fit_line(&lx, &ly);
    Ok(GuivarchReport {
        alpha_hat,
        c_hat: intercept.exp(),
        table,
        regular: alpha_hat >= REGULARITY_FLOOR,
    })
}

fn gaussian<R: Rng>(r: &mut R) -> f64 {
    // Box-Muller
    let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (TAU * v).cos()
}

/// Angular Wasserstein-1 distance between two measures on the circle,
/// computed on a uniform histogram with `bins` cells.
pub fn circle_wasserstein(a: &EmpiricalSphereMeasure, b: &EmpiricalSphereMeasure, bins: usize) -> Result<f64> {
    if a.dim() != 2 || b.dim() != 2 {
        return Err(Error::DimensionNot2(a.dim().max(b.dim())));
    }
    let hist = |m: &EmpiricalSphereMeasure| {
        let mut h = vec![0.0; bins];
        for (x, w) in m.atoms() {
            let t = x[1].atan2(x[0]).rem_euclid(TAU);
            let k = ((t / TAU) * bins as f64) as usize;
            h[k.min(bins - 1)] += w;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let mut diff = Vec::with_capacity(bins);
    let mut acc = 0.0;
    for (x, y) in ha.iter().zip(&hb) {
        acc += x - y;
        diff.push(acc);
    }
    // W1 on the circle: min over shifts c of int |F - G - c|, attained at the median
    let mut sorted = diff.clone();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let median = sorted[bins / 2];
    let width = TAU / bins as f64;
    Ok(diff.iter().map(|v| (v - median).abs()).sum::<f64>() * width)
}
