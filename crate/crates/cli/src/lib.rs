//! Command-line front end: data generation, fitting, hyperparameter sweeps
//! and held-out evaluation.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ardnmf::datagen::{add_noise, gen_ground_truth, gen_mask, gen_swimmer, NoiseFamily, NoiseSpec};
use ardnmf::hyper::{phi_preset, sample_mean, select_b};
use ardnmf::io::{
    read_mask, read_matrix, read_vector, write_mask, write_matrix, write_report, write_trace,
    write_vector,
};
use ardnmf::matrix::matmul;
use ardnmf::metrics::{component_summary, normalized_divergence, ComponentSummary, HoldoutDivergence};
use ardnmf::mm::FitReport;
use ardnmf::rng::{derive_seed, seeded_rng};
use ardnmf::{ard_fit, nmf_fit, ArdConfig, DenseMatrix, MaskMatrix, NmfFitOptions, Penalty};

pub mod sweep;

/// Failure of a command, split by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable inputs or hyperparameters out of range (exit 1).
    Usage(String),
    /// The solver or a numeric routine failed (exit 2).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<ardnmf::Error> for CliError {
    fn from(e: ardnmf::Error) -> Self {
        use ardnmf::Error as E;
        match e {
            E::Domain(_) | E::NonFinite(_) | E::Singular(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read_input(what: &str, path: &Path) -> Result<DenseMatrix, CliError> {
    read_matrix(path).map_err(|e| CliError::Usage(format!("{what} {}: {e}", path.display())))
}

fn read_mask_input(what: &str, path: &Path) -> Result<MaskMatrix, CliError> {
    read_mask(path).map_err(|e| CliError::Usage(format!("{what} {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(usage)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(name = "ardnmf", version, about = "β-NMF with automatic relevance determination")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic data, the swimmer corpus or a missing-entry mask.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Fit plain NMF or ARD NMF to a data matrix.
    Fit(FitArgs),
    /// Fit over a grid of a values and seeds.
    Sweep(sweep::SweepArgs),
    /// Score a factorization on held-out entries.
    Eval(EvalArgs),
}

#[derive(Subcommand, Debug)]
pub enum GenKind {
    /// Data drawn from the hierarchical model plus noise.
    Synthetic(SyntheticArgs),
    /// The 1024×256 swimmer image corpus.
    Swimmer(SwimmerArgs),
    /// A random mask for an existing data matrix.
    Mask(MaskArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorArg {
    L1,
    L2,
}

impl From<PriorArg> for Penalty {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::L1 => Penalty::L1,
            PriorArg::L2 => Penalty::L2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseArg {
    Gaussian,
    Poisson,
    Gamma,
    None,
}

#[derive(Args, Debug)]
pub struct SyntheticArgs {
    #[arg(long = "F", default_value_t = 50)]
    pub f: usize,
    #[arg(long = "N", default_value_t = 100)]
    pub n: usize,
    #[arg(long = "Ktrue", default_value_t = 5)]
    pub k_true: usize,
    #[arg(long, default_value_t = 50.0)]
    pub a: f64,
    #[arg(long, default_value_t = 70.0)]
    pub b: f64,
    /// Prior of W and H: exponential (l1) or half-normal (l2).
    #[arg(long, value_enum, default_value_t = PriorArg::L1)]
    pub prior: PriorArg,
    #[arg(long, value_enum, default_value_t = NoiseArg::Poisson)]
    pub noise: NoiseArg,
    /// Target SNR in dB.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SwimmerArgs {
    #[arg(long, default_value_t = 10.0)]
    pub body: f64,
    #[arg(long, default_value_t = 1.0)]
    pub background: f64,
    /// Skip the Poisson noise.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Data matrix whose shape the mask takes.
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of entries to remove.
    #[arg(long)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mask file (1 = observed).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the complement, marking the removed entries.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nmf,
    ArdL1,
    ArdL2,
}

impl Method {
    pub fn penalty(self) -> Option<Penalty> {
        match self {
            Method::Nmf => None,
            Method::ArdL1 => Some(Penalty::L1),
            Method::ArdL2 => Some(Penalty::L2),
        }
    }
}

/// `auto` or a positive number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BArg {
    Auto,
    Value(f64),
}

impl std::str::FromStr for BArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(BArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(BArg::Value(x)),
            _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
        }
    }
}

/// Solver flags shared by `fit` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Data matrix file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub beta: f64,
    /// Number of components.
    #[arg(long = "K")]
    pub k: usize,
    /// Scale hyperparameter: `auto` selects it from the data mean.
    #[arg(long, default_value = "auto")]
    pub b: BArg,
    /// Dispersion; defaults to 1 for beta 0 and 1.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    pub tau: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    pub max_iter: usize,
    /// Mask file (1 = observed); masked entries are ignored by the fit.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Floor applied to updated entries of W and H.
    #[arg(long, default_value_t = ardnmf::mm::DEFAULT_FLOOR)]
    pub floor: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Shape hyperparameter of the relevance prior (ARD methods).
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Do not write the per-iteration trace.
    #[arg(long = "no-trace")]
    pub no_trace: bool,
    /// Rescale W columns to unit norm after each iteration (nmf only).
    #[arg(long = "normalize-w")]
    pub normalize_w: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Complete data matrix.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long = "W")]
    pub w: PathBuf,
    #[arg(long = "H")]
    pub h: PathBuf,
    /// Mask marking the held-out entries with 1.
    #[arg(long)]
    pub holdout: PathBuf,
    /// Relevance weights; ½‖h_k‖² is used without them.
    #[arg(long)]
    pub lambda: Option<PathBuf>,
    /// Write the metrics as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything a single fit needs, resolved from the flags and the data.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedFit {
    pub data: String,
    pub method: Method,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub b_auto: bool,
    pub phi: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub normalize_w: bool,
}

pub struct FitOutcome {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub lambda: Vec<f64>,
    pub report: FitReport,
}

/// Fills in φ and b and checks flag combinations.
pub fn resolve_fit(
    solver: &SolverArgs,
    a: Option<f64>,
    seed: u64,
    normalize_w: bool,
    v: &DenseMatrix,
    mask: Option<&MaskMatrix>,
) -> Result<ResolvedFit, CliError> {
    if solver.k == 0 {
        return Err(usage("--K must be at least 1"));
    }
    let phi = match solver.phi {
        Some(p) if p > 0.0 && p.is_finite() => p,
        Some(p) => return Err(usage(format!("--phi must be positive, got {p}"))),
        None if solver.beta == 0.0 || solver.beta == 1.0 || solver.method == Method::Nmf => 1.0,
        None => {
            return Err(usage(format!(
                "--phi is required for beta = {} (defaults exist only for beta 0 and 1)",
                solver.beta
            )))
        }
    };
    let (a, b) = match solver.method.penalty() {
        None => {
            if a.is_some() {
                return Err(usage("--a only applies to ARD methods"));
            }
            (None, None)
        }
        Some(penalty) => {
            if normalize_w {
                return Err(usage("--normalize-w only applies to --method nmf"));
            }
            let a = a.ok_or_else(|| usage("--a is required for ARD methods"))?;
            let b = match solver.b {
                BArg::Value(b) => b,
                BArg::Auto => {
                    let mu = sample_mean(v, mask).map_err(usage)?;
                    select_b(mu, solver.k, a, penalty).map_err(|e| usage(format!("--b auto: {e}")))?
                }
            };
            (Some(a), Some(b))
        }
    };
    Ok(ResolvedFit {
        data: solver.data.display().to_string(),
        method: solver.method,
        beta: solver.beta,
        k: solver.k,
        a,
        b,
        b_auto: solver.b == BArg::Auto,
        phi,
        tau: solver.tau,
        max_iter: solver.max_iter,
        seed,
        floor: solver.floor,
        mask: solver.mask.as_ref().map(|p| p.display().to_string()),
        normalize_w,
    })
}

pub fn run_fit(cfg: &ResolvedFit, v: &DenseMatrix, mask: Option<&MaskMatrix>) -> Result<FitOutcome, CliError> {
    match cfg.method.penalty() {
        None => {
            let mut opts = NmfFitOptions::new(cfg.k, cfg.beta);
            opts.tau = cfg.tau;
            opts.max_iter = cfg.max_iter;
            opts.seed = cfg.seed;
            opts.floor = cfg.floor;
            opts.normalize_w_columns = cfg.normalize_w;
            let fit = nmf_fit(v, &opts, mask)?;
            let lambda = fit.report.final_lambda().map(<[f64]>::to_vec).unwrap_or_default();
            Ok(FitOutcome {
                w: fit.w,
                h: fit.h,
                lambda,
                report: fit.report,
            })
        }
        Some(penalty) => {
            let mut config = ArdConfig::new(
                cfg.k,
                cfg.beta,
                penalty,
                cfg.a.expect("resolved"),
                cfg.b.expect("resolved"),
            );
            config.phi = cfg.phi;
            config.tau = cfg.tau;
            config.max_iter = cfg.max_iter;
            config.seed = cfg.seed;
            config.floor = cfg.floor;
            let fit = ard_fit(v, &config, mask)?;
            Ok(FitOutcome {
                w: fit.state.w,
                h: fit.state.h,
                lambda: fit.state.lambda,
                report: fit.report,
            })
        }
    }
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let v = read_input("data", &args.solver.data)?;
    let mask = match &args.solver.mask {
        Some(p) => Some(read_mask_input("mask", p)?),
        None => None,
    };
    let cfg = resolve_fit(&args.solver, args.a, args.seed, args.normalize_w, &v, mask.as_ref())?;
    let out = run_fit(&cfg, &v, mask.as_ref())?;
    create_dir(&args.out)?;
    write_matrix(args.out.join("W.txt"), &out.w)?;
    write_matrix(args.out.join("H.txt"), &out.h)?;
    write_vector(args.out.join("lambda.txt"), &out.lambda)?;
    let trace = if args.no_trace {
        None
    } else {
        write_trace(args.out.join("trace.csv"), &out.report)?;
        Some(Path::new("trace.csv"))
    };
    write_report(args.out.join("report.json"), &out.report, &cfg, trace)?;
    println!(
        "K_eff = {} after {} iterations ({:?}), objective {:.6e}",
        out.report.k_eff,
        out.report.iterations,
        out.report.termination,
        out.report.final_objective()
    );
    Ok(())
}

#[derive(Serialize)]
struct SyntheticInfo<'a> {
    kind: &'static str,
    #[serde(rename = "F")]
    f: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Ktrue")]
    k_true: usize,
    a: f64,
    b: f64,
    prior: PriorArg,
    noise: NoiseArg,
    target_snr_db: f64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_param: Option<ardnmf::datagen::NoiseParam>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_rate: Option<f64>,
    /// Dispersion matched to the noise, for `fit --phi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    files: &'a [&'a str],
}

fn cmd_gen_synthetic(args: &SyntheticArgs) -> Result<(), CliError> {
    let mut rng = seeded_rng(args.seed);
    let gt = gen_ground_truth(args.f, args.n, args.k_true, args.a, args.b, args.prior.into(), &mut rng)?;
    let family = match args.noise {
        NoiseArg::Gaussian => Some(NoiseFamily::Gaussian),
        NoiseArg::Poisson => Some(NoiseFamily::Poisson),
        NoiseArg::Gamma => Some(NoiseFamily::Gamma),
        NoiseArg::None => None,
    };
    let noisy = match family {
        Some(family) => Some(add_noise(
            &gt.vhat,
            &NoiseSpec {
                family,
                target_snr_db: args.snr,
            },
            &mut rng,
        )?),
        None => None,
    };
    create_dir(&args.out)?;
    let v = noisy.as_ref().map_or(&gt.vhat, |n| &n.v);
    write_matrix(args.out.join("V.txt"), v)?;
    write_matrix(args.out.join("Vhat.txt"), &gt.vhat)?;
    write_matrix(args.out.join("W.txt"), &gt.w)?;
    write_matrix(args.out.join("H.txt"), &gt.h)?;
    write_vector(args.out.join("lambda.txt"), &gt.lambda)?;
    let phi = match (&noisy, family) {
        (Some(n), Some(f)) => phi_preset(f.matching_beta(), &n.param).ok(),
        _ => None,
    };
    let info = SyntheticInfo {
        kind: "synthetic",
        f: args.f,
        n: args.n,
        k_true: args.k_true,
        a: args.a,
        b: args.b,
        prior: args.prior,
        noise: args.noise,
        target_snr_db: args.snr,
        seed: args.seed,
        noise_param: noisy.as_ref().map(|n| n.param),
        measured_snr_db: noisy.as_ref().map(|n| n.measured_snr_db),
        clip_rate: noisy.as_ref().map(|n| n.clip_rate),
        phi,
        files: &["V.txt", "Vhat.txt", "W.txt", "H.txt", "lambda.txt"],
    };
    write_json(&args.out.join("gen.json"), &info)?;
    match &noisy {
        Some(n) => println!(
            "wrote {}x{} data to {} (SNR {:.2} dB)",
            args.f,
            args.n,
            args.out.display(),
            n.measured_snr_db
        ),
        None => println!("wrote {}x{} noiseless data to {}", args.f, args.n, args.out.display()),
    }
    Ok(())
}

#[derive(Serialize)]
struct SwimmerInfo {
    kind: &'static str,
    body: f64,
    background: f64,
    poisson: bool,
    seed: u64,
    #[serde(rename = "Ktrue")]
    k_true: usize,
}

fn cmd_gen_swimmer(args: &SwimmerArgs) -> Result<(), CliError> {
    let mut rng = seeded_rng(args.seed);
    let s = gen_swimmer(args.body, args.background, !args.noiseless, &mut rng)?;
    create_dir(&args.out)?;
    write_matrix(args.out.join("V.txt"), &s.v)?;
    write_matrix(args.out.join("Vhat.txt"), &s.clean)?;
    write_json(
        &args.out.join("gen.json"),
        &SwimmerInfo {
            kind: "swimmer",
            body: args.body,
            background: args.background,
            poisson: !args.noiseless,
            seed: args.seed,
            k_true: 16,
        },
    )?;
    println!("wrote {}x{} swimmer data to {}", s.v.rows(), s.v.cols(), args.out.display());
    Ok(())
}

fn cmd_gen_mask(args: &MaskArgs) -> Result<(), CliError> {
    let v = read_input("data", &args.data)?;
    let mut rng = seeded_rng(args.seed);
    let mask = gen_mask(v.rows(), v.cols(), args.fraction, &mut rng)?;
    write_mask(&args.out, &mask)?;
    if let Some(h) = &args.holdout {
        write_mask(h, &mask.complement())?;
    }
    println!(
        "removed {} of {} entries",
        mask.missing_count(),
        v.rows() * v.cols()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub nkld: HoldoutDivergence,
    pub neuc: HoldoutDivergence,
    pub nis: HoldoutDivergence,
    pub components: Vec<ComponentSummary>,
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let v = read_input("truth", &args.truth)?;
    let w = read_input("W", &args.w)?;
    let h = read_input("H", &args.h)?;
    let holdout = read_mask_input("holdout", &args.holdout)?;
    let lambda = match &args.lambda {
        Some(p) => Some(read_vector(p).map_err(|e| usage(format!("lambda {}: {e}", p.display())))?),
        None => None,
    };
    let vhat = matmul(&w, &h).map_err(usage)?;
    if vhat.shape() != v.shape() {
        return Err(usage(format!(
            "W H is {:?} but the truth is {:?}",
            vhat.shape(),
            v.shape()
        )));
    }
    let report = EvalReport {
        nkld: normalized_divergence(&v, &vhat, &holdout, 1.0)?,
        neuc: normalized_divergence(&v, &vhat, &holdout, 2.0)?,
        nis: normalized_divergence(&v, &vhat, &holdout, 0.0)?,
        components: component_summary(&w, &h, lambda.as_deref()).map_err(usage)?,
    };
    for (name, d) in [("NKLD", report.nkld), ("NEUC", report.neuc), ("NIS", report.nis)] {
        let skipped = if d.skipped > 0 {
            format!(" ({} entries outside the domain skipped)", d.skipped)
        } else {
            String::new()
        };
        println!("{name} {:.6e} over {} entries{skipped}", d.value, d.evaluated);
    }
    println!("k relevance std");
    for c in &report.components {
        println!("{} {:.6e} {:.6e}", c.k + 1, c.relevance, c.std);
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen { kind } => match kind {
            GenKind::Synthetic(a) => cmd_gen_synthetic(a),
            GenKind::Swimmer(a) => cmd_gen_swimmer(a),
            GenKind::Mask(a) => cmd_gen_mask(a),
        },
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Per-run seed used by sweeps; exposed so single fits can reproduce a sweep cell.
pub fn run_seed(seed: u64, run: u64) -> u64 {
    derive_seed(seed, run)
}
