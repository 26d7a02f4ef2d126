//! `affourier`: command-line front end.
//!
//! Every subcommand reads the same JSON configuration (`--config`) and writes
//! its outputs into `--out` (default: the current directory).
//!
//! Exit codes: 0 success, 1 runtime or stage error, 2 unreadable or
//! malformed configuration, 3 invalid system.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affourier_core::fourier::Method;
use affourier_core::props::{contraction_verdict, irreducibility_test, proximality_witness, CRITERION_NOTE};
use affourier_core::report::{
    self, fourier_stage, renewal_stage, sweep_plan, walk_stage, write_validation, FourierConfig, Overrides,
    RenewalConfig, ReportConfig, TransferConfig, WalkConfig,
};
use affourier_core::sphere::WalkLaw;
use affourier_core::transfer::spectral_scan;
use affourier_core::{decay, fourier, rng, AffineSystem, Error};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "affourier", version, about = "Fourier decay experiments for self-affine measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the system; writes validation.json.
    Validate(Common),
    /// Evaluate the Fourier transform at the configured frequencies; writes fourier.csv.
    Fourier(Common),
    /// Decay sweep and power-law fit; writes decay_table.csv and decay_points.csv.
    Sweep(Common),
    /// Lyapunov exponent, invariant cone, stationary measure; writes walk.json,
    /// stationary.csv and guivarch.csv.
    Walk(Common),
    /// Renewal sweep against the limit functional; writes renewal.csv.
    Renewal(Common),
    /// Transfer-operator spectral scan; writes transfer.csv.
    Transfer(Common),
    /// Proximality, irreducibility and contraction verdicts; writes props.json.
    Props(Common),
    /// Full pipeline; writes every applicable output and summary.json.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Node budget per recursive evaluation.
    #[arg(long)]
    budget: Option<usize>,
    /// `recursive` or `mc`.
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Invalid(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) => Failure::Config(e.to_string()),
            Error::Invalid(_) => Failure::Invalid(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

struct Loaded {
    config: ReportConfig,
    base: PathBuf,
    seed: u64,
    overrides: Overrides,
}

impl Common {
    fn load(&self) -> Result<Loaded, Failure> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| Failure::Config(format!("{}: {e}", self.config.display())))?;
        let config = ReportConfig::from_json(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", self.config.display())))?;
        let base = self.config.parent().unwrap_or(Path::new(".")).to_path_buf();
        fs::create_dir_all(&self.out)?;
        let overrides = Overrides {
            seed: self.seed,
            budget: self.budget,
            method: self.method,
        };
        Ok(Loaded {
            seed: self.seed.unwrap_or(config.seed),
            config,
            base,
            overrides,
        })
    }
}

impl Loaded {
    fn system(&self, out: &Path) -> Result<AffineSystem, Failure> {
        let raw = self.config.raw_system(&self.base)?;
        match raw.validate() {
            Ok(s) => Ok(s),
            Err(Error::Invalid(v)) => {
                write_validation(out, &v)?;
                Err(Error::Invalid(v).into())
            }
            Err(e) => Err(e.into()),
        }
    }
}

fn write(out: &Path, name: &str, text: &str) -> Outcome {
    fs::write(out.join(name), text)?;
    println!("wrote {}", out.join(name).display());
    Ok(())
}

fn json(value: &impl serde::Serialize) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn validate(c: &Common) -> Outcome {
    let l = c.load()?;
    l.system(&c.out)?;
    write_validation(&c.out, &[])?;
    println!("valid");
    Ok(())
}

fn fourier_cmd(c: &Common) -> Outcome {
    let l = c.load()?;
    let system = l.system(&c.out)?;
    let fc = l.config.fourier.clone().unwrap_or_else(|| FourierConfig {
        xi: default_frequencies(system.dim()),
        ..FourierConfig::default()
    });
    let method = c.method.unwrap_or(Method::Recursive);
    let budget = c.budget.unwrap_or(l.config.sweep.budget);
    let csv = fourier_stage(&system, &fc, method, budget, l.seed)?;
    write(&c.out, "fourier.csv", &csv)
}

/// Multiples of the axes up to 100.
fn default_frequencies(d: usize) -> Vec<Vec<f64>> {
    let mut xs = Vec::new();
    for i in 0..d {
        for r in [1.0, 10.0, 100.0] {
            let mut xi = vec![0.0; d];
            xi[i] = r;
            xs.push(xi);
        }
    }
    xs
}

fn sweep(c: &Common) -> Outcome {
    let l = c.load()?;
    let system = l.system(&c.out)?;
    let plan = sweep_plan(&system, &l.config, &l.overrides, l.seed)?;
    let rep = decay::decay_sweep(&system, &plan)?;
    write(&c.out, "decay_table.csv", &rep.table_csv())?;
    write(&c.out, "decay_points.csv", &fourier::fourier_csv(system.dim(), &rep.points))?;
    match (rep.alpha_hat(), rep.fit) {
        (Some(a), Some(fit)) => println!("alpha_hat = {a:.4} [{:.4}, {:.4}]", fit.ci_low, fit.ci_high),
        _ => println!("no reliable decay exponent: {}", rep.fit_note),
    }
    for w in &rep.warnings {
        println!("warning: {w}");
    }
    if rep.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} sweep points failed: {}", rep.failures.len(), rep.failures.join("; "))))
    }
}

fn walk(c: &Common) -> Outcome {
    let l = c.load()?;
    let system = l.system(&c.out)?;
    let wc = l.config.walk.clone().unwrap_or_else(WalkConfig::default);
    let w = walk_stage(&system, &wc, l.seed)?;
    write(&c.out, "walk.json", &json(&w.summary)?)?;
    write(&c.out, "stationary.csv", &w.stationary_csv)?;
    if let Some(csv) = &w.guivarch_csv {
        write(&c.out, "guivarch.csv", csv)?;
    }
    Ok(())
}

fn renewal(c: &Common) -> Outcome {
    let l = c.load()?;
    let system = l.system(&c.out)?;
    let rc = l.config.renewal.clone().unwrap_or_else(RenewalConfig::default);
    let (csv, summary) = renewal_stage(&system, &rc, l.seed)?;
    write(&c.out, "renewal.csv", &csv)?;
    println!(
        "limit = {:.6} + {:.6}i (stderr {:.2e}), final residual {:.3e}",
        summary.limit_re, summary.limit_im, summary.limit_stderr, summary.final_residual
    );
    Ok(())
}

fn transfer(c: &Common) -> Outcome {
    let l = c.load()?;
    let system = l.system(&c.out)?;
    let tc = l.config.transfer.clone().unwrap_or_else(TransferConfig::default);
    let law = WalkLaw::from_system(&system);
    let scan = spectral_scan(&law, tc.a, &tc.b_grid, tc.n_points, tc.n_iter)?;
    write(&c.out, "transfer.csv", &scan.to_csv())?;
    if let Some(m) = scan.max_modulus_between(1e-12, f64::INFINITY) {
        println!("max leading modulus off b = 0: {m:.6}");
    }
    Ok(())
}

fn props(c: &Common) -> Outcome {
    let l = c.load()?;
    let system = l.system(&c.out)?;
    let p = &l.config.props;
    let verdicts = vec![
        contraction_verdict(&system),
        proximality_witness(&system, p.max_word_len, p.gap_threshold, rng::derive_seed(l.seed, 1)),
        irreducibility_test(&system, p.max_word_len, p.n_candidates, rng::derive_seed(l.seed, 2))?,
    ];
    write(&c.out, "props.json", &json(&verdicts)?)?;
    for v in &verdicts {
        println!("{:?}: {:?}", v.property, v.verdict);
    }
    println!("{CRITERION_NOTE}");
    Ok(())
}

fn report_cmd(c: &Common) -> Outcome {
    let l = c.load()?;
    let summary = report::run_report_with(&l.config, &l.base, &c.out, &l.overrides)?;
    println!("wrote {}", c.out.join("summary.json").display());
    if let Some(d) = &summary.decay {
        match (d.alpha_hat, d.ci) {
            (Some(a), Some((lo, hi))) => println!("alpha_hat = {a:.4} [{lo:.4}, {hi:.4}]"),
            _ => println!("no reliable decay exponent: {}", d.note),
        }
        for w in &d.warnings {
            println!("warning: {w}");
        }
    }
    if summary.errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(summary.errors.join("; ")))
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("AFFOURIER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("AFFOURIER_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Validate(c) => validate(c),
        Command::Fourier(c) => fourier_cmd(c),
        Command::Sweep(c) => sweep(c),
        Command::Walk(c) => walk(c),
        Command::Renewal(c) => renewal(c),
        Command::Transfer(c) => transfer(c),
        Command::Props(c) => props(c),
        Command::Report(c) => report_cmd(c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
