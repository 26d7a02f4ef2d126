//! Configuration-driven report: validation, semigroup verdicts, barycenter
//! and Frostman fit, decay sweep, and optionally renewal, transfer and
//! stopping-time diagnostics. Writes CSV files and `summary.json` into an
//! output directory. Nothing written depends on timing or thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decay::{decay_sweep, schedule_st, SweepPlan, DEFAULT_DIRECTIONS, DEFAULT_EPSILON1};
use crate::error::{Error, Result, Violation};
use crate::fourier::{
    barycenter, chaos_sample, check_cs_bound, fourier_csv, fourier_mc, frostman, tube_mass,
    FourierRow, Method, RecursiveEvaluator,
};
use crate::ifs::{AffineSystem, RawSystem};
use crate::props::{contraction_verdict, irreducibility_test, proximality_witness, PropertyVerdict, CRITERION_NOTE};
use crate::renewal::{renewal_et, renewal_sweep, StationaryInputs, TestFunction};
use crate::rng;
use crate::sphere::{
    detect_cone, guivarch_check, lyapunov, stationary, ConeReport, GuivarchReport, LyapunovEstimate,
    Provenance, SpherePoint, WalkLaw,
};
use crate::transfer::spectral_scan;
use crate::words::DEFAULT_NODE_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub n_magnitudes: usize,
    pub n_directions: usize,
    pub method: Method,
    pub tol: f64,
    pub budget: usize,
    pub mc_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            r_min: 16.0,
            r_max: 4096.0,
            n_magnitudes: 9,
            n_directions: DEFAULT_DIRECTIONS,
            method: Method::Recursive,
            tol: 1e-3,
            budget: DEFAULT_NODE_CAP,
            mc_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrostmanConfig {
    pub pool_size: usize,
    /// Decreasing radii; by default `R 2^{-k}` for `k = 2..=8`, with `R` the
    /// radius of an invariant ball.
    pub radii: Option<Vec<f64>>,
}

impl Default for FrostmanConfig {
    fn default() -> Self {
        FrostmanConfig {
            pool_size: 100_000,
            radii: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropsConfig {
    pub max_word_len: usize,
    pub gap_threshold: f64,
    pub n_candidates: usize,
}

impl Default for PropsConfig {
    fn default() -> Self {
        PropsConfig {
            max_word_len: 8,
            gap_threshold: 0.05,
            n_candidates: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenewalConfig {
    /// `one`, `bump`, `linear_u`, `fourier_phase` or `nonpositive`.
    pub function: String,
    /// Width of the bump or period of the phase.
    pub scale: f64,
    pub t_grid: Vec<f64>,
    pub n_samples: usize,
    pub n_atoms: usize,
    /// Start direction; the first axis by default.
    pub start: Option<Vec<f64>>,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig {
            function: "bump".into(),
            scale: 1.0,
            t_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0, 30.0],
            n_samples: 100_000,
            n_atoms: 100_000,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub a: f64,
    pub b_grid: Vec<f64>,
    pub n_points: usize,
    pub n_iter: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            a: 0.0,
            b_grid: (-10..=10).map(|k| 5.0 * k as f64).collect(),
            n_points: 2048,
            n_iter: 3000,
        }
    }
}

/// Stopping-time bookkeeping at `|xi| = s e^t` with `s = |xi|^{eps/(6+eps)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticConfig {
    pub xi_norms: Vec<f64>,
    /// Defaults to the renewal fit, else 1.
    pub epsilon1: Option<f64>,
    pub pool_size: usize,
    pub n_samples: usize,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        DiagnosticConfig {
            xi_norms: vec![10.0, 30.0, 100.0],
            epsilon1: None,
            pool_size: 20_000,
            n_samples: 20_000,
        }
    }
}

/// Frequencies for the `fourier` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierConfig {
    pub xi: Vec<Vec<f64>>,
    pub tol: f64,
    pub mc_samples: usize,
}

impl Default for FourierConfig {
    fn default() -> Self {
        FourierConfig {
            xi: Vec::new(),
            tol: 1e-3,
            mc_samples: 100_000,
        }
    }
}

/// Sphere-walk diagnostics: Lyapunov exponent, invariant cone, stationary
/// measure and hyperplane regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub burn_in: usize,
    pub n_atoms: usize,
    pub n_hyperplanes: usize,
    pub radii: Vec<f64>,
    pub start: Option<Vec<f64>>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            n_steps: 2000,
            n_trajectories: 64,
            burn_in: 200,
            n_atoms: 50_000,
            n_hyperplanes: 64,
            radii: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Inline system (`dim`, `maps` with `A`, `b`, `p`).
    #[serde(default)]
    pub system: Option<RawSystem>,
    /// Path to a system file, relative to the configuration file.
    #[serde(default)]
    pub system_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub frostman: FrostmanConfig,
    #[serde(default)]
    pub props: PropsConfig,
    #[serde(default)]
    pub renewal: Option<RenewalConfig>,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    #[serde(default)]
    pub diagnostic: Option<DiagnosticConfig>,
    #[serde(default)]
    pub fourier: Option<FourierConfig>,
    #[serde(default)]
    pub walk: Option<WalkConfig>,
}

impl ReportConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// The raw system, reading `system_path` relative to `base` if needed.
    pub fn raw_system(&self, base: &Path) -> Result<RawSystem> {
        match (&self.system, &self.system_path) {
            (Some(s), None) => Ok(s.clone()),
            (None, Some(p)) => RawSystem::from_path(base.join(p)),
            _ => Err(Error::InvalidArgument(
                "configuration needs exactly one of `system` and `system_path`".into(),
            )),
        }
    }
}

/// Command-line overrides applied on top of the configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub method: Option<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub dim: usize,
    pub n_maps: usize,
    pub norms: Vec<f64>,
    pub singleton: bool,
    pub barycenter: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub alpha_hat: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub note: String,
    pub warnings: Vec<String>,
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalSummary {
    pub function: String,
    pub lyapunov: f64,
    pub lyapunov_half_width: f64,
    pub cone_component: String,
    pub limit_re: f64,
    pub limit_im: f64,
    pub limit_stderr: f64,
    pub final_residual: f64,
    pub epsilon_hat: Option<f64>,
    pub resolution_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub max_modulus_off_zero: Option<f64>,
    pub flat_at_one: bool,
    pub reducible: bool,
    pub unconverged_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub seed: u64,
    pub system: SystemSummary,
    pub verdicts: Vec<PropertyVerdict>,
    pub criterion_note: String,
    pub frostman_s1: Option<f64>,
    pub frostman_s2_hat: Option<f64>,
    pub decay: Option<DecaySummary>,
    pub renewal: Option<RenewalSummary>,
    pub transfer: Option<TransferSummary>,
    pub walk: Option<WalkSummary>,
    pub cs_violations: Option<usize>,
    pub errors: Vec<String>,
    pub files: Vec<String>,
}

impl ReportSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialises");
        s.push('\n');
        s
    }
}

/// Failure of the validation stage, with the violations written to
/// `validation.json`.
pub fn write_validation(out: &Path, violations: &[Violation]) -> Result<()> {
    let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    let mut text = serde_json::to_string_pretty(&serde_json::json!({ "valid": list.is_empty(), "violations": list }))?;
    text.push('\n');
    fs::write(out.join("validation.json"), text)?;
    Ok(())
}

/// Runs the report described by the file at `config_path` into `out_dir`.
pub fn run_report(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<ReportSummary> {
    let config = ReportConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_report_with(&config, base, out_dir, overrides)
}

/// As [`run_report`] for a parsed configuration.
///
/// Validation failures are returned as [`Error::Invalid`] after writing
/// `validation.json`. Failures of later stages are collected in
/// `errors` of the summary, which is always written.
pub fn run_report_with(
    config: &ReportConfig,
    base: &Path,
    out_dir: &Path,
    overrides: &Overrides,
) -> Result<ReportSummary> {
    fs::create_dir_all(out_dir)?;
    let raw = config.raw_system(base)?;
    let system = match raw.validate() {
        Ok(s) => s,
        Err(Error::Invalid(v)) => {
            write_validation(out_dir, &v)?;
            return Err(Error::Invalid(v));
        }
        Err(e) => return Err(e),
    };
    write_validation(out_dir, &[])?;
    let seed = overrides.seed.unwrap_or(config.seed);
    let mut files = vec!["validation.json".to_string()];
    let mut errors = Vec::new();
    let mut write = |name: &str, text: String| -> Result<()> {
        fs::write(out_dir.join(name), text)?;
        files.push(name.to_string());
        Ok(())
    };

    let p = &config.props;
    let mut verdicts = vec![
        contraction_verdict(&system),
        proximality_witness(&system, p.max_word_len, p.gap_threshold, rng::derive_seed(seed, 1)),
    ];
    match irreducibility_test(&system, p.max_word_len, p.n_candidates, rng::derive_seed(seed, 2)) {
        Ok(v) => verdicts.push(v),
        Err(e) => errors.push(format!("irreducibility: {e}")),
    }
    let mut props_json = serde_json::to_string_pretty(&verdicts)?;
    props_json.push('\n');
    write("props.json", props_json)?;

    let bary = barycenter(&system);
    let (frostman_s1, frostman_s2_hat) = match frostman_stage(&system, config, seed) {
        Ok((csv, s1, s2)) => {
            write("frostman.csv", csv)?;
            (Some(s1), Some(s2))
        }
        Err(e) => {
            errors.push(format!("frostman: {e}"));
            (None, None)
        }
    };

    let decay = match sweep_plan(&system, config, overrides, seed).and_then(|plan| decay_sweep(&system, &plan)) {
        Ok(rep) => {
            write("decay_table.csv", rep.table_csv())?;
            write("decay_points.csv", fourier_csv(system.dim(), &rep.points))?;
            errors.extend(rep.failures.iter().map(|f| format!("decay: {f}")));
            Some(DecaySummary {
                alpha_hat: rep.alpha_hat(),
                ci: rep.fit.map(|f| (f.ci_low, f.ci_high)),
                note: rep.fit_note.clone(),
                warnings: rep.warnings.clone(),
                failed_points: rep.failures.len(),
            })
        }
        Err(e) => {
            errors.push(format!("decay: {e}"));
            None
        }
    };

    let renewal = match &config.renewal {
        None => None,
        Some(rc) => match renewal_stage(&system, rc, seed) {
            Ok((csv, summary)) => {
                write("renewal.csv", csv)?;
                Some(summary)
            }
            Err(e) => {
                errors.push(format!("renewal: {e}"));
                None
            }
        },
    };

    let transfer = match &config.transfer {
        None => None,
        Some(tc) => {
            let law = WalkLaw::from_system(&system);
            match spectral_scan(&law, tc.a, &tc.b_grid, tc.n_points, tc.n_iter) {
                Ok(scan) => {
                    write("transfer.csv", scan.to_csv())?;
                    Some(TransferSummary {
                        max_modulus_off_zero: scan.max_modulus_between(1e-12, f64::INFINITY),
                        flat_at_one: scan.is_flat(1e-6),
                        reducible: scan.reducible(),
                        unconverged_points: scan.converged.iter().filter(|c| !**c).count(),
                    })
                }
                Err(e) => {
                    errors.push(format!("transfer: {e}"));
                    None
                }
            }
        }
    };

    let walk = match &config.walk {
        None => None,
        Some(wc) => match walk_stage(&system, wc, seed) {
            Ok(w) => {
                write("stationary.csv", w.stationary_csv)?;
                if let Some(csv) = w.guivarch_csv {
                    write("guivarch.csv", csv)?;
                }
                Some(w.summary)
            }
            Err(e) => {
                errors.push(format!("walk: {e}"));
                None
            }
        },
    };

    let cs_violations = match &config.diagnostic {
        None => None,
        Some(dc) => {
            let eps = dc
                .epsilon1
                .or(renewal.as_ref().and_then(|r| r.epsilon_hat))
                .unwrap_or(DEFAULT_EPSILON1);
            match diagnostic_stage(&system, dc, eps, seed) {
                Ok((csv, n)) => {
                    write("diagnostic.csv", csv)?;
                    Some(n)
                }
                Err(e) => {
                    errors.push(format!("diagnostic: {e}"));
                    None
                }
            }
        }
    };

    files.push("summary.json".into());
    let summary = ReportSummary {
        seed,
        system: SystemSummary {
            dim: system.dim(),
            n_maps: system.len(),
            norms: system.norms().to_vec(),
            singleton: system.is_singleton(),
            barycenter: bary,
        },
        verdicts,
        criterion_note: CRITERION_NOTE.into(),
        frostman_s1,
        frostman_s2_hat,
        decay,
        renewal,
        transfer,
        walk,
        cs_violations,
        errors,
        files,
    };
    fs::write(out_dir.join("summary.json"), summary.to_json())?;
    Ok(summary)
}

pub fn sweep_plan(system: &AffineSystem, config: &ReportConfig, overrides: &Overrides, seed: u64) -> Result<SweepPlan> {
    let sc = &config.sweep;
    let mut plan = SweepPlan::geometric(system.dim(), sc.r_min, sc.r_max, sc.n_magnitudes)?;
    plan.directions = crate::decay::default_directions(system.dim(), sc.n_directions);
    plan.method = overrides.method.unwrap_or(sc.method);
    plan.tol = sc.tol;
    plan.node_cap = overrides.budget.unwrap_or(sc.budget);
    plan.mc_samples = sc.mc_samples;
    plan.seed = rng::derive_seed(seed, 4);
    Ok(plan)
}

pub fn frostman_stage(system: &AffineSystem, config: &ReportConfig, seed: u64) -> Result<(String, f64, f64)> {
    let fc = &config.frostman;
    let pool = chaos_sample(system, fc.pool_size, rng::derive_seed(seed, 3), system.default_burn_in());
    let radii = match &fc.radii {
        Some(r) => r.clone(),
        None => {
            let (_, radius) = system.attractor_ball();
            let radius = if radius > 0.0 { radius } else { 1.0 };
            (2..=8).map(|k| radius * 0.5f64.powi(k)).collect()
        }
    };
    let est = frostman(system, &pool, &radii)?;
    let mut csv = String::from("r,sup_mass,inf_mass\n");
    for (r, sup, inf) in &est.table {
        let _ = writeln!(csv, "{r},{sup},{inf}");
    }
    Ok((csv, est.s1, est.s2_hat))
}

pub fn renewal_stage(system: &AffineSystem, rc: &RenewalConfig, seed: u64) -> Result<(String, RenewalSummary)> {
    let law = WalkLaw::from_system(system);
    let f = TestFunction::named(&rc.function, rc.scale)?;
    let start = match &rc.start {
        Some(v) => SpherePoint::new(v.clone())
            .ok_or_else(|| Error::InvalidArgument("renewal start must be non-zero".into()))?,
        None => SpherePoint::axis(system.dim(), 0),
    };
    let inputs = StationaryInputs::estimate(&law, &start, rc.n_atoms, rng::derive_seed(seed, 5))?;
    let cmp = renewal_sweep(&law, &f, &start, &rc.t_grid, &inputs, rc.n_samples, rng::derive_seed(seed, 6))?;
    let summary = RenewalSummary {
        function: cmp.function.clone(),
        lyapunov: inputs.lyapunov.value,
        lyapunov_half_width: inputs.lyapunov.half_width,
        cone_component: inputs.measure.provenance.component.clone(),
        limit_re: cmp.limit_value.value.re,
        limit_im: cmp.limit_value.value.im,
        limit_stderr: cmp.limit_value.stderr,
        final_residual: *cmp.residuals.last().expect("non-empty grid"),
        epsilon_hat: cmp.epsilon_hat,
        resolution_gap: cmp.resolution_gap,
    };
    Ok((cmp.to_csv(), summary))
}

/// `mu^` at the configured frequencies as `fourier.csv` text. A recursive
/// evaluation that exceeds the node budget falls back to Monte Carlo.
pub fn fourier_stage(
    system: &AffineSystem,
    fc: &FourierConfig,
    method: Method,
    node_cap: usize,
    seed: u64,
) -> Result<String> {
    let d = system.dim();
    if let Some(bad) = fc.xi.iter().find(|x| x.len() != d) {
        return Err(Error::InvalidArgument(format!("frequency {bad:?} is not {d}-dimensional")));
    }
    let evaluator = RecursiveEvaluator::new(system).with_node_cap(node_cap);
    let pool = std::sync::OnceLock::new();
    let mc = |xi: &[f64]| {
        let pool = pool.get_or_init(|| chaos_sample(system, fc.mc_samples, rng::derive_seed(seed, 8), system.default_burn_in()));
        fourier_mc(pool, xi)
    };
    let mut rows = Vec::with_capacity(fc.xi.len());
    for xi in &fc.xi {
        let estimate = match method {
            Method::MonteCarlo => mc(xi)?,
            Method::Recursive => match evaluator.eval(xi, fc.tol) {
                Err(Error::BudgetExceeded { .. }) => mc(xi)?,
                other => other?,
            },
        };
        rows.push(FourierRow { xi: xi.clone(), estimate });
    }
    Ok(fourier_csv(d, &rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub lyapunov: LyapunovEstimate,
    pub cone: ConeReport,
    pub provenance: Provenance,
    pub guivarch: Option<GuivarchReport>,
}

pub struct WalkOutputs {
    pub summary: WalkSummary,
    pub stationary_csv: String,
    pub guivarch_csv: Option<String>,
}

pub fn walk_stage(system: &AffineSystem, wc: &WalkConfig, seed: u64) -> Result<WalkOutputs> {
    let law = WalkLaw::from_system(system);
    let lyap = lyapunov(&law, wc.n_steps, wc.n_trajectories, rng::derive_seed(seed, 9))?;
    let cone = detect_cone(&law, 10_000)?;
    let start = match &wc.start {
        Some(v) => SpherePoint::new(v.clone())
            .ok_or_else(|| Error::InvalidArgument("walk start must be non-zero".into()))?,
        None => SpherePoint::axis(system.dim(), 0),
    };
    let measure = stationary(&law, &start, wc.burn_in, wc.n_atoms, rng::derive_seed(seed, 10))?;
    let guivarch = if wc.radii.is_empty() {
        None
    } else {
        Some(guivarch_check(&measure, wc.n_hyperplanes, &wc.radii, rng::derive_seed(seed, 11))?)
    };
    let guivarch_csv = guivarch.as_ref().map(|g| {
        let mut csv = String::from("r,max_mass\n");
        for (r, m) in &g.table {
            let _ = writeln!(csv, "{r},{m}");
        }
        csv
    });
    Ok(WalkOutputs {
        stationary_csv: measure.to_csv(),
        summary: WalkSummary {
            lyapunov: lyap,
            cone,
            provenance: measure.provenance.clone(),
            guivarch,
        },
        guivarch_csv,
    })
}

/// For each `|xi|`: the schedule `(s, t)`, the Cauchy-Schwarz check along the
/// first diagonal direction, the tube mass at `delta = s^{-1/10}` and
/// `E_t 1` (which must be 1).
pub fn diagnostic_stage(system: &AffineSystem, dc: &DiagnosticConfig, eps: f64, seed: u64) -> Result<(String, usize)> {
    let d = system.dim();
    let pool = chaos_sample(system, dc.pool_size, rng::derive_seed(seed, 7), system.default_burn_in());
    let law = WalkLaw::from_system(system);
    let mut u = vec![1.0; d];
    crate::linalg::normalize(&mut u);
    let start = SpherePoint::new(u.clone()).expect("non-zero");
    let mut csv = String::from("xi_norm,s,t,cs_lhs,cs_lhs_stderr,cs_rhs,cs_rhs_stderr,cs_violated,delta,tube_mass,tube_stderr,et_one\n");
    let mut violations = 0;
    for (k, &norm) in dc.xi_norms.iter().enumerate() {
        if !(norm >= 1.0) {
            return Err(Error::InvalidArgument(format!("|xi| = {norm} must be >= 1")));
        }
        let (s, t) = schedule_st(norm, eps);
        let xi: Vec<f64> = u.iter().map(|c| c * norm).collect();
        let cs = check_cs_bound(system, &pool, &xi, t)?;
        violations += usize::from(cs.violated);
        let delta = s.powf(-0.1);
        let tube = tube_mass(&pool, delta)?;
        let et = renewal_et(&law, &TestFunction::one(), &start, t, dc.n_samples, rng::derive_seed(seed, 100 + k as u64))?;
        let _ = writeln!(
            csv,
            "{norm},{s},{t},{},{},{},{},{},{delta},{},{},{}",
            cs.lhs, cs.lhs_stderr, cs.rhs, cs.rhs_stderr, cs.violated, tube.mass, tube.stderr, et.value.re
        );
    }
    Ok((csv, violations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proximal_config() -> ReportConfig {
        ReportConfig::from_json(
            r#"{
                "system": {"dim": 2, "maps": [
                    {"A": [[0.2431934, -0.3786652], [0.3786652, 0.2431934]], "b": [0, 0], "p": 0.5},
                    {"A": [[0.6, 0], [0, 0.25]], "b": [0.4, 0.4], "p": 0.5}
                ]},
                "seed": 5,
                "sweep": {"r_min": 8, "r_max": 64, "n_magnitudes": 4, "n_directions": 8,
                          "method": "recursive", "tol": 0.001, "budget": 10000000, "mc_samples": 10000},
                "frostman": {"pool_size": 5000, "radii": null},
                "transfer": {"b_grid": [0, 10], "n_points": 128, "n_iter": 500},
                "diagnostic": {"xi_norms": [10, 40], "pool_size": 4000, "n_samples": 1000},
                "walk": {"n_steps": 200, "n_trajectories": 8, "n_atoms": 5000},
                "fourier": {"xi": [[1, 2], [0, 0]]}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn writes_all_outputs() {
        let dir = std::env::temp_dir().join(format!("affourier-report-{}", std::process::id()));
        let s = run_report_with(&proximal_config(), Path::new("."), &dir, &Overrides::default()).unwrap();
        assert!(s.errors.is_empty(), "{:?}", s.errors);
        for f in ["props.json", "frostman.csv", "decay_table.csv", "decay_points.csv", "transfer.csv", "diagnostic.csv", "stationary.csv", "guivarch.csv", "summary.json"] {
            assert!(dir.join(f).exists(), "{f}");
        }
        assert_eq!(s.cs_violations, Some(0));
        let text = fs::read_to_string(dir.join("diagnostic.csv")).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.ends_with(",1"), "{line}");
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn fourier_stage_rows() {
        let cfg = proximal_config();
        let system = cfg.system.as_ref().unwrap().validate().unwrap();
        let fc = cfg.fourier.as_ref().unwrap();
        let csv = fourier_stage(&system, fc, Method::Recursive, DEFAULT_NODE_CAP, 1).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("0,0,1,0,"), "{}", lines[2]);
        let bad = FourierConfig { xi: vec![vec![1.0]], ..FourierConfig::default() };
        assert!(fourier_stage(&system, &bad, Method::Recursive, DEFAULT_NODE_CAP, 1).is_err());
    }

    #[test]
    fn invalid_system_is_reported() {
        let mut cfg = proximal_config();
        cfg.system.as_mut().unwrap().maps[1].p = 0.7;
        let dir = std::env::temp_dir().join(format!("affourier-invalid-{}", std::process::id()));
        let err = run_report_with(&cfg, Path::new("."), &dir, &Overrides::default()).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("validation.json")).unwrap()).unwrap();
        assert_eq!(v["valid"], false);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ReportConfig::from_json("{\"seed\": 1,"), Err(Error::Parse(_))));
        assert!(ReportConfig::from_json("{\"bogus\": 1}").is_err());
        let cfg = ReportConfig::from_json("{\"seed\": 1}").unwrap();
        assert!(cfg.raw_system(Path::new(".")).is_err());
    }
}
