//! Stopping-time renewal operators of the sphere walk.
//!
//! For `x` on the sphere and `t >= 0`, `n_t(x)` is the first `n` with
//! `-sigma(S_n, x) > t`; the overshoot is `sigma(S_{n_t}, x) + t`, which
//! lies in `[min_j log s_min(g_j), 0)`.

use std::f64::consts::TAU;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sphere::{lyapunov, stationary, EmpiricalSphereMeasure, LyapunovEstimate, SpherePoint, WalkLaw};

type Evaluator = Arc<dyn Fn(&[f64], f64) -> Complex64 + Send + Sync>;

/// A function on `sphere x R` with declared regularity metadata.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    eval: Evaluator,
    pub sup_bound: f64,
    pub lipschitz: f64,
    /// `f(y, u) = 0` for `|u| > support_radius`.
    pub support_radius: f64,
    pub second_derivative_bound: Option<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("sup_bound", &self.sup_bound)
            .field("lipschitz", &self.lipschitz)
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        sup_bound: f64,
        lipschitz: f64,
        support_radius: f64,
        eval: impl Fn(&[f64], f64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            name: name.into(),
            eval: Arc::new(eval),
            sup_bound,
            lipschitz,
            support_radius,
            second_derivative_bound: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, y: &[f64], u: f64) -> Complex64 {
        (self.eval)(y, u)
    }

    /// `f = 1`.
    pub fn one() -> Self {
        TestFunction::new("one", 1.0, 0.0, f64::INFINITY, |_, _| Complex64::new(1.0, 0.0))
    }

    /// `f(y, u) = (1 + y_1 / 2) phi(u)` with `phi` the smooth bump
    /// `exp(1 - 1 / (1 - (u / w)^2))` on `|u| < w`.
    pub fn bump(width: f64) -> Self {
        let mut f = TestFunction::new("bump", 1.5, 3.0 / width, width, move |y, u| {
            let s = u / width;
            let phi = if s.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            };
            Complex64::new((1.0 + 0.5 * y[0]) * phi, 0.0)
        });
        f.second_derivative_bound = Some(10.0 / (width * width));
        f
    }

    /// `f(y, u) = u` (unbounded; only meaningful on overshoots).
    pub fn linear_u() -> Self {
        TestFunction::new("linear_u", f64::INFINITY, 1.0, f64::INFINITY, |_, u| Complex64::new(u, 0.0))
    }

    /// `f(y, u) = cos(2 pi u / period)`.
    pub fn fourier_phase(period: f64) -> Self {
        TestFunction::new("fourier_phase", 1.0, TAU / period, f64::INFINITY, move |_, u| {
            Complex64::new((TAU * u / period).cos(), 0.0)
        })
    }

    /// `f(y, u) = 1` for `u <= 0`, else `0`.
    pub fn nonpositive_indicator() -> Self {
        TestFunction::new("nonpositive", 1.0, f64::INFINITY, f64::INFINITY, |_, u| {
            Complex64::new(if u <= 0.0 { 1.0 } else { 0.0 }, 0.0)
        })
    }

    /// `a f + b g`.
    pub fn combine(a: f64, f: &TestFunction, b: f64, g: &TestFunction) -> Self {
        let (f, g) = (f.clone(), g.clone());
        TestFunction::new(
            format!("{a}*{}+{b}*{}", f.name, g.name),
            a.abs() * f.sup_bound + b.abs() * g.sup_bound,
            a.abs() * f.lipschitz + b.abs() * g.lipschitz,
            f.support_radius.max(g.support_radius),
            move |y, u| a * f.eval(y, u) + b * g.eval(y, u),
        )
    }

    /// Looks up a function by name (`one`, `bump`, `linear_u`, `fourier_phase`).
    pub fn named(name: &str, scale: f64) -> Result<Self> {
        match name {
            "one" => Ok(Self::one()),
            "bump" => Ok(Self::bump(scale)),
            "linear_u" => Ok(Self::linear_u()),
            "fourier_phase" => Ok(Self::fourier_phase(scale)),
            "nonpositive" => Ok(Self::nonpositive_indicator()),
            _ => Err(Error::InvalidArgument(format!("unknown test function {name:?}"))),
        }
    }

    /// Largest `|f|` seen on `n` random points of `sphere x [-support, support]`
    /// that exceeds the declared bound, if any.
    pub fn spot_check(&self, dim: usize, n: usize, seed: u64) -> Option<f64> {
        let mut r = rng::stream(seed, 0);
        let span = self.support_radius.min(10.0);
        (0..n)
            .map(|_| {
                let mut y: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
                crate::linalg::normalize(&mut y);
                let u = r.random_range(-span..=span);
                self.eval(&y, u).norm()
            })
            .filter(|v| *v > self.sup_bound * (1.0 + 1e-12))
            .reduce(f64::max)
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalEstimate {
    pub value: Complex64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Walks are abandoned beyond this many steps.
pub const STEP_CAP: usize = 1_000_000;

/// State at the crossing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    /// `S_{n_t} x`.
    pub position: Vec<f64>,
    /// `sigma(S_{n_t - 1}, x)`.
    pub before: f64,
    /// `sigma(X_{n_t}, S_{n_t - 1} x)`.
    pub last: f64,
    pub steps: usize,
}

impl Crossing {
    /// `sigma(S_{n_t}, x) + t`.
    pub fn overshoot(&self, t: f64) -> f64 {
        self.before + self.last + t
    }
}

fn check_pre(law: &WalkLaw, x: &SpherePoint, t: f64) -> Result<usize> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if x.dim() != law.dim() {
        return Err(Error::InvalidArgument("start point has the wrong dimension".into()));
    }
    let max_norm = law.max_norm();
    if !(max_norm < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "largest norm {max_norm} is not < 1; the stopping time may be infinite"
        )));
    }
    // each step lowers sigma by at least -log max_norm
    let bound = (t / -max_norm.ln()).floor() + 1.0;
    if bound > STEP_CAP as f64 {
        return Err(Error::StepCapExceeded { cap: STEP_CAP });
    }
    Ok(bound as usize)
}

/// Runs the walk from `x` until `-sigma(S_n, x) > t`.
pub fn cross<R: Rng>(law: &WalkLaw, x: &[f64], t: f64, r: &mut R) -> Crossing {
    let mut pos = x.to_vec();
    let mut buf = vec![0.0; pos.len()];
    let mut sigma = 0.0;
    let mut steps = 0;
    loop {
        let j = law.sample(r);
        let s = law.step(j, &mut pos, &mut buf);
        steps += 1;
        if -(sigma + s) > t {
            return Crossing {
                position: pos,
                before: sigma,
                last: s,
                steps,
            };
        }
        sigma += s;
    }
}

/// Sums `g` over `n` crossings in deterministic chunks; returns the estimate.
fn average_crossings(
    law: &WalkLaw,
    x: &SpherePoint,
    t: f64,
    n_samples: usize,
    seed: u64,
    g: impl Fn(&Crossing) -> Complex64 + Sync,
) -> Result<RenewalEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    check_pre(law, x, t)?;
    let parts = rng::chunked(n_samples, rng::CHUNK, seed, |_, len, r| {
        let mut acc = Moments::default();
        for _ in 0..len {
            let c = cross(law, x.coords(), t, r);
            acc.push(g(&c));
        }
        acc
    });
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    Ok(total.estimate())
}

/// Running mean and sum of squared deviations (Welford, with Chan's merge).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: Complex64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: Complex64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += (delta.conj() * (v - self.mean)).re;
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta.norm_sqr() * self.n as f64 * w,
        }
    }

    fn estimate(&self) -> RenewalEstimate {
        let nf = self.n as f64;
        let var = (self.m2 / (nf - 1.0)).max(0.0);
        RenewalEstimate {
            value: self.mean,
            stderr: (var / nf).sqrt(),
            n_samples: self.n,
        }
    }
}

/// `E_t f(x) = E f(S_{n_t(x)} x, sigma(S_{n_t(x)}, x) + t)`.
pub fn renewal_et(
    law: &WalkLaw,
    f: &TestFunction,
    x: &SpherePoint,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RenewalEstimate> {
    average_crossings(law, x, t, n_samples, seed, |c| f.eval(&c.position, c.overshoot(t)))
}

/// `E_C f3(x) = E f3(hgx, sigma(h, gx), sigma(g, x) + t)` with `g = S_{n_t - 1}`
/// and `h = X_{n_t}`.
pub fn renewal_residue(
    law: &WalkLaw,
    f3: impl Fn(&[f64], f64, f64) -> Complex64 + Sync,
    x: &SpherePoint,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RenewalEstimate> {
    average_crossings(law, x, t, n_samples, seed, |c| f3(&c.position, c.last, c.before + t))
}

/// An estimate of `nu_x` together with the Lyapunov constant of the law.
#[derive(Debug, Clone)]
pub struct StationaryInputs {
    pub measure: EmpiricalSphereMeasure,
    pub lyapunov: LyapunovEstimate,
}

impl StationaryInputs {
    /// Runs [`stationary`] (burn-in 200) and [`lyapunov`] (`10^4` steps,
    /// 200 trajectories) with seeds derived from `seed`.
    pub fn estimate(law: &WalkLaw, x: &SpherePoint, n_atoms: usize, seed: u64) -> Result<Self> {
        Ok(StationaryInputs {
            measure: stationary(law, x, 200, n_atoms, rng::derive_seed(seed, 10))?,
            lyapunov: lyapunov(law, 10_000, 200, rng::derive_seed(seed, 11))?,
        })
    }
}

/// The limit functional
/// `(1/|sigma_lambda|) int int int_0^{-sigma(h,y)} f(hy, sigma(h,y) + u) du dlambda(h) dnu_x(y)`
/// in importance form: `y ~ nu`, `h ~ lambda`, `u ~ U[0, -sigma(h,y)]` and the
/// integrand `-sigma(h,y) f(hy, sigma(h,y) + u)`.
///
/// The standard error treats the atoms in consecutive blocks of
/// [`rng::CHUNK`] as clusters (they come from one chain each), so it covers
/// the correlation of the stationary sample, and it adds the relative error of
/// the Lyapunov estimate in quadrature.
pub fn renewal_limit(
    law: &WalkLaw,
    f: &TestFunction,
    inputs: &StationaryInputs,
    n_samples: usize,
    seed: u64,
) -> Result<RenewalEstimate> {
    let LyapunovEstimate { value: sigma, half_width } = inputs.lyapunov;
    if sigma + half_width >= 0.0 {
        return Err(Error::NonNegativeLyapunov {
            estimate: sigma,
            half_width,
        });
    }
    let nu = &inputs.measure;
    if nu.dim() != law.dim() {
        return Err(Error::InvalidArgument("stationary measure has the wrong dimension".into()));
    }
    if n_samples < 2 || nu.is_empty() {
        return Err(Error::InsufficientSamples("need samples and atoms".into()));
    }
    let n_clusters = nu.len().div_ceil(rng::CHUNK);
    let d = law.dim();
    let parts = rng::chunked(n_samples, rng::CHUNK, seed, |_, len, r| {
        let mut sums = vec![(Complex64::new(0.0, 0.0), 0usize); n_clusters];
        let mut buf = vec![0.0; d];
        let mut acc = Moments::default();
        for _ in 0..len {
            let k = nu.sample(r);
            let mut y = nu.atom(k).to_vec();
            let j = law.sample(r);
            let s = law.step(j, &mut y, &mut buf);
            let u = -s * r.random::<f64>();
            let v = -s * f.eval(&y, s + u);
            let c = &mut sums[k / rng::CHUNK];
            c.0 += v;
            c.1 += 1;
            acc.push(v);
        }
        (sums, acc)
    });
    let mut clusters = vec![(Complex64::new(0.0, 0.0), 0usize); n_clusters];
    let mut acc = Moments::default();
    for (p, q) in &parts {
        for (c, s) in clusters.iter_mut().zip(p) {
            c.0 += s.0;
            c.1 += s.1;
        }
        acc = acc.merge(*q);
    }
    let n = n_samples as f64;
    let total: Complex64 = clusters.iter().map(|c| c.0).sum();
    let m = total / n;
    let used: Vec<&(Complex64, usize)> = clusters.iter().filter(|c| c.1 > 0).collect();
    let se_m = if used.len() >= 2 {
        // cluster (ratio-estimator) variance
        let g = used.len() as f64;
        let s: f64 = used.iter().map(|c| (c.0 - m * c.1 as f64).norm_sqr()).sum();
        (s * g / (g - 1.0)).sqrt() / n
    } else {
        acc.estimate().stderr
    };
    let scale = -sigma;
    let value = m / scale;
    let se_sigma = 0.5 * half_width;
    let stderr = ((se_m / scale).powi(2) + (value.norm() * se_sigma / scale).powi(2)).sqrt();
    Ok(RenewalEstimate {
        value,
        stderr,
        n_samples,
    })
}

/// `E_t f` on a threshold grid against the limit functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalComparison {
    pub function: String,
    pub t_grid: Vec<f64>,
    pub et_values: Vec<RenewalEstimate>,
    pub limit_value: RenewalEstimate,
    pub residuals: Vec<f64>,
    /// Decay rate of the residuals above the noise floor, when at least two
    /// residuals exceed three combined standard errors and decrease.
    pub epsilon_hat: Option<f64>,
    /// Difference between the limit computed from the first half of the
    /// atoms and from all of them.
    pub resolution_gap: f64,
}

impl RenewalComparison {
    pub fn combined_stderr(&self, i: usize) -> f64 {
        self.et_values[i].stderr.hypot(self.limit_value.stderr)
    }

    /// CSV with columns `t, re_Et, im_Et, stderr, re_limit, im_limit, limit_stderr, residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re_Et,im_Et,stderr,re_limit,im_limit,limit_stderr,residual\n");
        let l = &self.limit_value;
        for ((t, e), res) in self.t_grid.iter().zip(&self.et_values).zip(&self.residuals) {
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{},{},{res}",
                e.value.re, e.value.im, e.stderr, l.value.re, l.value.im, l.stderr
            );
        }
        out
    }
}

/// Tabulates `|E_t f(x) - limit|` over `t_grid`. Each `t` uses its own
/// stream derived from `seed`.
pub fn renewal_sweep(
    law: &WalkLaw,
    f: &TestFunction,
    x: &SpherePoint,
    t_grid: &[f64],
    inputs: &StationaryInputs,
    n_samples: usize,
    seed: u64,
) -> Result<RenewalComparison> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("t_grid must be non-empty and increasing".into()));
    }
    let limit = renewal_limit(law, f, inputs, n_samples, rng::derive_seed(seed, 0))?;
    let half = half_resolution(&inputs.measure);
    let coarse = renewal_limit(
        law,
        f,
        &StationaryInputs {
            measure: half,
            lyapunov: inputs.lyapunov,
        },
        n_samples,
        rng::derive_seed(seed, 0),
    )?;
    let mut et_values = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        et_values.push(renewal_et(law, f, x, t, n_samples, rng::derive_seed(seed, i as u64 + 1))?);
    }
    let residuals: Vec<f64> = et_values.iter().map(|e| (e.value - limit.value).norm()).collect();
    let mut cmp = RenewalComparison {
        function: f.name().to_string(),
        t_grid: t_grid.to_vec(),
        et_values,
        limit_value: limit,
        residuals,
        epsilon_hat: None,
        resolution_gap: (coarse.value - limit.value).norm(),
    };
    let (ts, logs): (Vec<f64>, Vec<f64>) = (0..t_grid.len())
        .filter(|&i| cmp.residuals[i] > 3.0 * cmp.combined_stderr(i))
        .map(|i| (t_grid[i], cmp.residuals[i].ln()))
        .unzip();
    if ts.len() >= 2 {
        let (_, slope) = crate::fourier::fit_line(&ts, &logs);
        if slope < 0.0 {
            cmp.epsilon_hat = Some(-slope);
        }
    }
    Ok(cmp)
}

/// The first half of the atoms (rounded to whole chains), reweighted.
fn half_resolution(m: &EmpiricalSphereMeasure) -> EmpiricalSphereMeasure {
    let keep = (m.len() / 2).div_ceil(rng::CHUNK).max(1) * rng::CHUNK;
    let keep = keep.min(m.len());
    let d = m.dim();
    let mut atoms = Vec::with_capacity(keep * d);
    let mut weights = Vec::with_capacity(keep);
    for (x, w) in m.atoms().take(keep) {
        atoms.extend_from_slice(x);
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        let u = 1.0 / keep as f64;
        weights.iter_mut().for_each(|w| *w = u);
    }
    EmpiricalSphereMeasure::new(d, atoms, weights, m.provenance.clone())
}
