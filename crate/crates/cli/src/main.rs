//! `smoothfix`: simulate and verify fixed points of smoothing transforms.
//!
//! Exit codes: 0 when everything passed, 1 when a statistical check said no
//! (a rejected test, a failed suite criterion, a missing characteristic
//! exponent), 2 for bad usage or parameters, 3 when a node budget ran out.

mod config;
mod report;

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use smoothfix_core::error::Error as CoreError;
use smoothfix_core::fixpoints::{
    sample_coupled, sample_w, sample_wstar, CoupledBatch, SampleOptions,
};
use smoothfix_core::models::{builtin_model, BasicSequenceModel, ModelParams};
use smoothfix_core::quicksort::{
    exact_mean, exact_mean_closed_form, limit_family_check, normalized_costs,
};
use smoothfix_core::spectral::{profile_and_report, AssumptionReport, FindAlphaOptions};
use smoothfix_core::stable::{solution_sample, Regime, SolutionSpec, StableParams};
use smoothfix_core::suite::run_all;
use smoothfix_core::verify::{
    default_t_grid, disintegration_track, fixed_point_test, statistic_for, CfModel, CfTable,
    DisintegrationOptions, StatKind, TestOptions, TestOutcome,
};

use config::FileConfig;
use report::{csv_writer, write_json, Meta};

#[derive(Parser)]
#[command(name = "smoothfix", version, about = "Fixed points of smoothing transforms: sampling, verification, diagnostics")]
struct Cli {
    /// TOML file with per-subcommand defaults; flags win over file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory artifacts are written into.
    #[arg(long, global = true, env = "SMOOTHFIX_OUT_DIR", default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the characteristic exponent and check the standing assumptions.
    Spectral(SpectralArgs),
    /// Draw endogenous limits: the weight martingale, the toll sum, or both coupled.
    Sample(SampleArgs),
    /// Draw from one member of the fixed-point family.
    Solution(SolutionArgs),
    /// Test a candidate sample against one step of the transform.
    Verify(VerifyArgs),
    /// Track conditioned characteristic functions level by level.
    Disintegrate(DisintegrateArgs),
    /// Quicksort cost statistics and the limit family check.
    Quicksort(QuicksortArgs),
    /// Run the acceptance suite, one criterion per line.
    Suite(SuiteArgs),
}

/// Step distribution flags shared by every model-driven subcommand.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Family name: quicksort, uniform-split-pair, iid-uniform-pair,
    /// powered-uniform-pair, gaussian-steps-pair, deterministic-half-pair.
    #[arg(long)]
    model: Option<String>,
    /// Weight exponent of powered-uniform-pair.
    #[arg(long)]
    p: Option<f64>,
    /// Mean step of gaussian-steps-pair.
    #[arg(long)]
    m0: Option<f64>,
    /// Constant added to every toll.
    #[arg(long)]
    c_shift: Option<f64>,
    /// Independent survival probability per child, in (0, 1].
    #[arg(long)]
    keep_prob: Option<f64>,
}

#[derive(Args)]
struct SpectralArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Upper end of the exponent scan.
    #[arg(long)]
    theta_max: Option<f64>,
    /// Scan step before bisection refinement.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Draws per moment evaluation on the Monte Carlo route.
    #[arg(long)]
    mc_budget: Option<u64>,
    /// Ignore closed forms and force the Monte Carlo route.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    force_mc: Option<bool>,
    /// Artifact file name inside --out-dir.
    #[arg(long)]
    out: Option<String>,
    /// Root seed for every random stream of this run.
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// What to draw: w, wstar, or coupled.
    #[arg(long)]
    kind: Option<String>,
    /// Tree depth the limits are read off at.
    #[arg(long)]
    depth: Option<usize>,
    /// Number of draws.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SolutionArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Index of the stable factor; must match the model's exponent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Skew of the stable factor (not at alpha 1 or 2).
    #[arg(long)]
    beta: Option<f64>,
    /// Shift in front of the weight martingale (alpha 1 only).
    #[arg(long)]
    mu: Option<f64>,
    /// Scale of the stable factor.
    #[arg(long)]
    sigma: Option<f64>,
    /// Include the toll part of the solution.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    with_toll: Option<bool>,
    /// Pool tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Pool size, which is also the number of output draws.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// File with candidate draws, one number per line (CSV output of the
    /// solution subcommand works as is). Mutually exclusive with --alpha.
    #[arg(long, value_name = "FILE")]
    candidate: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    with_toll: Option<bool>,
    /// Pool tree depth when the candidate is built internally.
    #[arg(long)]
    depth: Option<usize>,
    /// Pool size when the candidate is built internally.
    #[arg(long)]
    batch: Option<usize>,
    /// Test level.
    #[arg(long)]
    level: Option<f64>,
    /// Permutations per test.
    #[arg(long)]
    n_perm: Option<usize>,
    /// Statistic: energy or ecf. Defaults to the rule the family calls for.
    #[arg(long)]
    statistic: Option<String>,
    /// Evaluation grid of the ecf statistic.
    #[arg(long, value_delimiter = ',', value_name = "T,T,...")]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct DisintegrateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Multiply in the toll prefactor while conditioning.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    with_toll: Option<bool>,
    /// Reference law: stable (closed form) or table (estimated from solution draws).
    #[arg(long)]
    cf: Option<String>,
    /// Table reach; beyond it the log characteristic function is extrapolated.
    #[arg(long)]
    s_max: Option<f64>,
    /// Table knot count.
    #[arg(long)]
    grid: Option<usize>,
    /// Pool tree depth feeding the table.
    #[arg(long)]
    pool_depth: Option<usize>,
    /// Pool size feeding the table.
    #[arg(long)]
    pool_batch: Option<usize>,
    /// Deepest level to condition on.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Trees per level.
    #[arg(long)]
    batch: Option<usize>,
    /// Evaluation points.
    #[arg(long, value_delimiter = ',', value_name = "T,T,...")]
    ts: Option<Vec<f64>>,
    /// Fail (exit 1) when the sup deviation exceeds this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct QuicksortArgs {
    /// Keys per run.
    #[arg(long)]
    n: Option<usize>,
    /// Number of runs.
    #[arg(long)]
    reps: Option<usize>,
    /// Family member shift; together with --sigma triggers the family check.
    #[arg(long)]
    mu: Option<f64>,
    /// Family member scale.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    pool_depth: Option<usize>,
    #[arg(long)]
    pool_batch: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: u64,
}

enum CliError {
    Core(CoreError),
    Usage(String),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CoreError::NodeBudget { .. }) => 3,
            CliError::Core(CoreError::NoCharacteristicExponent { .. }) => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> CliError {
        CliError::Io(std::io::Error::other(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let file = config::load(cli.config.as_deref()).map_err(CliError::Usage)?;
    let dir = cli.out_dir;
    match cli.command {
        Command::Spectral(a) => run_spectral(a, file, &dir),
        Command::Sample(a) => run_sample(a, file, &dir),
        Command::Solution(a) => run_solution(a, file, &dir),
        Command::Verify(a) => run_verify(a, file, &dir),
        Command::Disintegrate(a) => run_disintegrate(a, file, &dir),
        Command::Quicksort(a) => run_quicksort(a, file, &dir),
        Command::Suite(a) => run_suite(a, file, &dir),
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn need<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T, CliError> {
    flag.or(file).ok_or_else(|| {
        CliError::Usage(format!(
            "{what} is required; pass the flag or set it in the config file"
        ))
    })
}

#[derive(Default)]
struct ModelKeys {
    model: Option<String>,
    p: Option<f64>,
    m0: Option<f64>,
    c_shift: Option<f64>,
    keep_prob: Option<f64>,
}

fn resolve_model(args: &ModelArgs, file: ModelKeys) -> Result<BasicSequenceModel, CliError> {
    let name = need(args.model.clone(), file.model, "--model")?;
    let params = ModelParams {
        p: args.p.or(file.p),
        m0: args.m0.or(file.m0),
        c_shift: args.c_shift.or(file.c_shift),
        keep_prob: args.keep_prob.or(file.keep_prob),
    };
    Ok(builtin_model(&name, &params)?)
}

/// Maps loose (alpha, beta, mu, sigma) knobs onto the regime the index pins
/// down, refusing combinations the family does not have.
fn build_spec(
    alpha: f64,
    beta: Option<f64>,
    mu: Option<f64>,
    sigma: f64,
    with_toll: bool,
) -> Result<SolutionSpec, CliError> {
    let near = |x: f64, y: f64| (x - y).abs() < 1e-9;
    let regime = if near(alpha, 1.0) {
        if beta.unwrap_or(0.0) != 0.0 {
            return Err(CliError::Usage(
                "the skew is pinned to zero when alpha = 1; drop --beta".into(),
            ));
        }
        Regime::AlphaOne {
            mu: mu.unwrap_or(0.0),
            sigma,
        }
    } else {
        if mu.unwrap_or(0.0) != 0.0 {
            return Err(CliError::Usage(
                "the --mu shift only exists at alpha = 1".into(),
            ));
        }
        if near(alpha, 2.0) {
            if beta.unwrap_or(0.0) != 0.0 {
                return Err(CliError::Usage(
                    "the Gaussian endpoint has no skew; drop --beta".into(),
                ));
            }
            Regime::AlphaTwo { sigma }
        } else {
            Regime::General {
                sigma,
                beta: beta.unwrap_or(0.0),
            }
        }
    };
    Ok(SolutionSpec::new(alpha, regime, with_toll)?)
}

/// Coupled pool for solution draws. Homogeneous specs never read the toll
/// column, so it can stay zero and skip the toll admissibility gates.
fn build_pool(
    model: &BasicSequenceModel,
    depth: usize,
    batch: usize,
    seed: u64,
    need_wstar: bool,
) -> Result<CoupledBatch, CliError> {
    let (profile, report) = profile_and_report(
        model,
        FindAlphaOptions {
            seed,
            ..FindAlphaOptions::default()
        },
    )?;
    let opts = SampleOptions { depth, batch, seed };
    if need_wstar {
        Ok(sample_coupled(&profile, &report, &opts)?)
    } else {
        let b = sample_w(&profile, &opts)?;
        let n = b.values.len();
        Ok(CoupledBatch {
            model: b.model,
            depth: b.depth,
            alpha: b.alpha,
            w: b.values,
            wstar: vec![0.0; n],
        })
    }
}

fn statistic_name(kind: StatKind) -> &'static str {
    match kind {
        StatKind::Energy => "energy",
        StatKind::EcfGrid => "ecf",
    }
}

fn parse_statistic(name: &str) -> Result<StatKind, CliError> {
    match name {
        "energy" => Ok(StatKind::Energy),
        "ecf" => Ok(StatKind::EcfGrid),
        other => Err(CliError::Usage(format!(
            "unknown statistic {other}; use energy or ecf"
        ))),
    }
}

#[derive(Serialize)]
struct SpectralParams {
    model: String,
    theta_max: f64,
    grid_step: f64,
    mc_budget: u64,
    force_mc: bool,
}

#[derive(Serialize)]
struct SpectralArtifact {
    command: &'static str,
    seed: u64,
    config_sha256: String,
    params: SpectralParams,
    alpha: f64,
    m_prime_alpha: f64,
    residual: f64,
    residual_bound: f64,
    mc_samples: u64,
    assumptions: AssumptionReport,
}

fn run_spectral(a: SpectralArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.spectral.unwrap_or_default();
    let model = resolve_model(
        &a.model,
        ModelKeys {
            model: s.model,
            p: s.p,
            m0: s.m0,
            c_shift: s.c_shift,
            keep_prob: s.keep_prob,
        },
    )?;
    let d = FindAlphaOptions::default();
    let params = SpectralParams {
        model: model.spec_string(),
        theta_max: pick(a.theta_max, s.theta_max, d.theta_max),
        grid_step: pick(a.grid_step, s.grid_step, d.grid_step),
        mc_budget: pick(a.mc_budget, s.mc_budget, d.mc_budget),
        force_mc: pick(a.force_mc, s.force_mc, d.force_mc),
    };
    let meta = Meta::new("spectral", a.seed, &params);
    let (profile, report) = profile_and_report(
        &model,
        FindAlphaOptions {
            theta_max: params.theta_max,
            grid_step: params.grid_step,
            mc_budget: params.mc_budget,
            seed: a.seed,
            force_mc: params.force_mc,
        },
    )?;
    println!(
        "{}: alpha = {:.9}  m'(alpha) = {:.6}  residual <= {:.2e}",
        params.model, profile.alpha, profile.m_prime_alpha, profile.residual_bound
    );
    for note in &report.notes {
        println!("note: {note}");
    }
    let artifact = SpectralArtifact {
        command: meta.command,
        seed: meta.seed,
        config_sha256: meta.digest.clone(),
        params,
        alpha: profile.alpha,
        m_prime_alpha: profile.m_prime_alpha,
        residual: profile.residual,
        residual_bound: profile.residual_bound,
        mc_samples: profile.mc_samples,
        assumptions: report,
    };
    let path = write_json(dir, &pick(a.out, s.out, "spectral.json".into()), &artifact)?;
    println!("wrote {}", path.display());
    Ok(0)
}

#[derive(Serialize)]
struct SampleParams {
    model: String,
    kind: String,
    depth: usize,
    batch: usize,
}

fn run_sample(a: SampleArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.sample.unwrap_or_default();
    let model = resolve_model(
        &a.model,
        ModelKeys {
            model: s.model,
            p: s.p,
            m0: s.m0,
            c_shift: s.c_shift,
            keep_prob: s.keep_prob,
        },
    )?;
    let params = SampleParams {
        model: model.spec_string(),
        kind: pick(a.kind, s.kind, "coupled".into()),
        depth: pick(a.depth, s.depth, 14),
        batch: pick(a.batch, s.batch, 4_000),
    };
    if !matches!(params.kind.as_str(), "w" | "wstar" | "coupled") {
        return Err(CliError::Usage(format!(
            "unknown kind {}; use w, wstar or coupled",
            params.kind
        )));
    }
    let meta = Meta::new("sample", a.seed, &params);
    let (profile, report) = profile_and_report(
        &model,
        FindAlphaOptions {
            seed: a.seed,
            ..FindAlphaOptions::default()
        },
    )?;
    let opts = SampleOptions {
        depth: params.depth,
        batch: params.batch,
        seed: a.seed,
    };
    let name = pick(a.out, s.out, "sample.csv".into());
    let (mut w, path) = csv_writer(dir, &name, &meta)?;
    match params.kind.as_str() {
        "w" => {
            let b = sample_w(&profile, &opts)?;
            w.write_record(["index", "w"])?;
            for (i, v) in b.values.iter().enumerate() {
                w.write_record([i.to_string(), v.to_string()])?;
            }
            println!("w: mean {:.6} (se {:.6})", b.mean(), b.se());
        }
        "wstar" => {
            let b = sample_wstar(&profile, &report, &opts)?;
            w.write_record(["index", "wstar"])?;
            for (i, v) in b.values.iter().enumerate() {
                w.write_record([i.to_string(), v.to_string()])?;
            }
            println!("wstar: mean {:.6} (se {:.6})", b.mean(), b.se());
        }
        "coupled" => {
            let b = sample_coupled(&profile, &report, &opts)?;
            w.write_record(["index", "w", "wstar"])?;
            for i in 0..b.len() {
                w.write_record([i.to_string(), b.w[i].to_string(), b.wstar[i].to_string()])?;
            }
            let n = b.len() as f64;
            println!(
                "coupled: w mean {:.6}, wstar mean {:.6}",
                b.w.iter().sum::<f64>() / n,
                b.wstar.iter().sum::<f64>() / n
            );
        }
        _ => unreachable!("kind was validated above"),
    }
    w.flush()?;
    println!(
        "alpha = {:.9}, depth {}, {} draws; wrote {}",
        profile.alpha,
        params.depth,
        params.batch,
        path.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct SolutionParams {
    model: String,
    alpha: f64,
    beta: f64,
    mu: f64,
    sigma: f64,
    with_toll: bool,
    depth: usize,
    batch: usize,
}

fn run_solution(a: SolutionArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.solution.unwrap_or_default();
    let model = resolve_model(
        &a.model,
        ModelKeys {
            model: s.model,
            p: s.p,
            m0: s.m0,
            c_shift: s.c_shift,
            keep_prob: s.keep_prob,
        },
    )?;
    let alpha = need(a.alpha, s.alpha, "--alpha")?;
    let sigma = need(a.sigma, s.sigma, "--sigma")?;
    let beta = a.beta.or(s.beta);
    let mu = a.mu.or(s.mu);
    let with_toll = pick(a.with_toll, s.with_toll, false);
    let spec = build_spec(alpha, beta, mu, sigma, with_toll)?;
    let params = SolutionParams {
        model: model.spec_string(),
        alpha: spec.alpha,
        beta: beta.unwrap_or(0.0),
        mu: mu.unwrap_or(0.0),
        sigma,
        with_toll,
        depth: pick(a.depth, s.depth, 14),
        batch: pick(a.batch, s.batch, 4_000),
    };
    let meta = Meta::new("solution", a.seed, &params);
    let pool = build_pool(&model, params.depth, params.batch, a.seed, with_toll)?;
    let xs = solution_sample(&spec, &pool, a.seed)?;
    let name = pick(a.out, s.out, "solution.csv".into());
    let (mut w, path) = csv_writer(dir, &name, &meta)?;
    w.write_record(["index", "x"])?;
    for (i, v) in xs.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    println!(
        "{} solution draws (alpha = {}, sigma = {}, toll {}); wrote {}",
        xs.len(),
        spec.alpha,
        sigma,
        if with_toll { "included" } else { "dropped" },
        path.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct VerifyParams {
    model: String,
    candidate: Option<String>,
    alpha: Option<f64>,
    beta: f64,
    mu: f64,
    sigma: Option<f64>,
    with_toll: bool,
    depth: usize,
    batch: usize,
    level: f64,
    n_perm: usize,
    statistic: String,
    t_grid: Vec<f64>,
}

#[derive(Serialize)]
struct VerifyArtifact {
    command: &'static str,
    seed: u64,
    config_sha256: String,
    params: VerifyParams,
    spec: Option<SolutionSpec>,
    outcome: TestOutcome,
}

/// Reads one candidate value per line. Comment lines are skipped, and for
/// CSV-ish rows the last field counts, so solution output files load as is.
fn read_candidates(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut xs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) => xs.push(v),
            // one non-numeric lead line is a header
            Err(_) if xs.is_empty() => continue,
            Err(_) => {
                return Err(CliError::Usage(format!(
                    "{}:{}: not a number: {line}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(xs)
}

fn run_verify(a: VerifyArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.verify.unwrap_or_default();
    let model = resolve_model(
        &a.model,
        ModelKeys {
            model: s.model,
            p: s.p,
            m0: s.m0,
            c_shift: s.c_shift,
            keep_prob: s.keep_prob,
        },
    )?;
    let candidate = a.candidate.or(s.candidate.map(PathBuf::from));
    let alpha = a.alpha.or(s.alpha);
    let sigma = a.sigma.or(s.sigma);
    let beta = a.beta.or(s.beta);
    let mu = a.mu.or(s.mu);
    let with_toll = pick(a.with_toll, s.with_toll, false);
    let depth = pick(a.depth, s.depth, 14);
    let batch = pick(a.batch, s.batch, 4_000);
    let statistic_flag = a.statistic.or(s.statistic);

    if candidate.is_some() && alpha.is_some() {
        return Err(CliError::Usage(
            "give either --candidate or a solution family, not both".into(),
        ));
    }
    let (xs, spec) = match &candidate {
        Some(path) => (read_candidates(path)?, None),
        None => {
            let alpha = need(alpha, None, "--alpha (or --candidate)")?;
            let sigma = need(sigma, None, "--sigma")?;
            let spec = build_spec(alpha, beta, mu, sigma, with_toll)?;
            let pool = build_pool(&model, depth, batch, a.seed, with_toll)?;
            (solution_sample(&spec, &pool, a.seed)?, Some(spec))
        }
    };
    let statistic = match &statistic_flag {
        Some(name) => parse_statistic(name)?,
        None => spec.as_ref().map(statistic_for).unwrap_or(StatKind::Energy),
    };
    let opts = TestOptions {
        level: pick(a.level, s.level, 0.01),
        n_perm: pick(a.n_perm, s.n_perm, 499),
        statistic,
        t_grid: pick(a.t_grid, s.t_grid, default_t_grid()),
        seed: a.seed,
    };
    let params = VerifyParams {
        model: model.spec_string(),
        candidate: candidate.map(|p| p.display().to_string()),
        alpha,
        beta: beta.unwrap_or(0.0),
        mu: mu.unwrap_or(0.0),
        sigma,
        with_toll,
        depth,
        batch,
        level: opts.level,
        n_perm: opts.n_perm,
        statistic: statistic_name(statistic).into(),
        t_grid: opts.t_grid.clone(),
    };
    let meta = Meta::new("verify", a.seed, &params);
    let outcome = fixed_point_test(&model, &xs, &opts)?;
    println!(
        "{} statistic = {:.6}, p = {:.4} ({} candidates vs {} transformed) -> {}",
        statistic_name(outcome.statistic_kind),
        outcome.statistic,
        outcome.p_value,
        outcome.n_first,
        outcome.n_second,
        if outcome.reject {
            "REJECT"
        } else {
            "no evidence against the fixed point"
        }
    );
    let reject = outcome.reject;
    let artifact = VerifyArtifact {
        command: meta.command,
        seed: meta.seed,
        config_sha256: meta.digest.clone(),
        params,
        spec,
        outcome,
    };
    let path = write_json(dir, &pick(a.out, s.out, "verify.json".into()), &artifact)?;
    println!("wrote {}", path.display());
    Ok(if reject { 1 } else { 0 })
}

#[derive(Serialize)]
struct DisintegrateParams {
    model: String,
    cf: String,
    alpha: f64,
    beta: f64,
    mu: f64,
    sigma: f64,
    with_toll: bool,
    s_max: Option<f64>,
    grid: Option<usize>,
    pool_depth: Option<usize>,
    pool_batch: Option<usize>,
    max_depth: usize,
    batch: usize,
    ts: Vec<f64>,
    tol: Option<f64>,
}

fn run_disintegrate(a: DisintegrateArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.disintegrate.unwrap_or_default();
    let model = resolve_model(
        &a.model,
        ModelKeys {
            model: s.model,
            p: s.p,
            m0: s.m0,
            c_shift: s.c_shift,
            keep_prob: s.keep_prob,
        },
    )?;
    let alpha = need(a.alpha, s.alpha, "--alpha")?;
    let sigma = need(a.sigma, s.sigma, "--sigma")?;
    let beta = a.beta.or(s.beta);
    let mu = a.mu.or(s.mu);
    let with_toll = pick(a.with_toll, s.with_toll, false);
    let cf_kind = pick(a.cf, s.cf, "stable".into());
    let ts = pick(a.ts, s.ts, vec![0.25, 0.5, 1.0, 2.0]);
    let max_depth = pick(a.max_depth, s.max_depth, 10);
    let batch = pick(a.batch, s.batch, 200);
    let tol = a.tol.or(s.tol);

    let mut params = DisintegrateParams {
        model: model.spec_string(),
        cf: cf_kind.clone(),
        alpha,
        beta: beta.unwrap_or(0.0),
        mu: mu.unwrap_or(0.0),
        sigma,
        with_toll,
        s_max: None,
        grid: None,
        pool_depth: None,
        pool_batch: None,
        max_depth,
        batch,
        ts: ts.clone(),
        tol,
    };
    let cf = match cf_kind.as_str() {
        "stable" => CfModel::Stable(StableParams::new(
            alpha,
            beta.unwrap_or(0.0),
            mu.unwrap_or(0.0),
            sigma,
        )?),
        "table" => {
            let spec = build_spec(alpha, beta, mu, sigma, with_toll)?;
            let top = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
            let s_max = pick(a.s_max, s.s_max, 2.0 * top);
            let grid = pick(a.grid, s.grid, 256);
            let pool_depth = pick(a.pool_depth, s.pool_depth, 14);
            let pool_batch = pick(a.pool_batch, s.pool_batch, 4_000);
            params.s_max = Some(s_max);
            params.grid = Some(grid);
            params.pool_depth = Some(pool_depth);
            params.pool_batch = Some(pool_batch);
            let pool = build_pool(&model, pool_depth, pool_batch, a.seed, with_toll)?;
            CfModel::Table(CfTable::from_solution(&spec, &pool, s_max, grid, a.seed)?)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown reference {other}; use stable or table"
            )))
        }
    };
    let meta = Meta::new("disintegrate", a.seed, &params);
    let trace = disintegration_track(
        &model,
        &cf,
        &DisintegrationOptions {
            max_depth,
            ts,
            batch,
            with_toll,
            seed: a.seed,
        },
    )?;
    let name = pick(a.out, s.out, "disintegrate.csv".into());
    let (mut w, path) = csv_writer(dir, &name, &meta)?;
    w.write_record([
        "depth", "t", "re", "im", "se_re", "se_im", "ref_re", "ref_im", "deviation",
    ])?;
    for e in &trace.entries {
        w.write_record([
            e.depth.to_string(),
            e.t.to_string(),
            e.re.to_string(),
            e.im.to_string(),
            e.se_re.to_string(),
            e.se_im.to_string(),
            e.ref_re.to_string(),
            e.ref_im.to_string(),
            e.deviation().to_string(),
        ])?;
    }
    w.flush()?;
    let mut depths: Vec<usize> = trace.entries.iter().map(|e| e.depth).collect();
    depths.dedup();
    for d in depths {
        println!("depth {d:>2}: sup deviation {:.5}", trace.sup_deviation_at(d));
    }
    let sup = trace.sup_deviation();
    println!("sup deviation {sup:.5}; wrote {}", path.display());
    match tol {
        Some(tol) if sup > tol => {
            println!("deviation {sup:.5} exceeds --tol {tol}");
            Ok(1)
        }
        _ => Ok(0),
    }
}

#[derive(Serialize)]
struct QuicksortParams {
    n: usize,
    reps: usize,
    mu: Option<f64>,
    sigma: Option<f64>,
    pool_depth: usize,
    pool_batch: usize,
    level: f64,
    n_perm: usize,
}

#[derive(Serialize)]
struct QuicksortArtifact {
    command: &'static str,
    seed: u64,
    config_sha256: String,
    params: QuicksortParams,
    exact_mean: f64,
    exact_mean_closed_form: f64,
    cost_mean: f64,
    cost_variance: f64,
    limit_variance: f64,
    family_test: Option<TestOutcome>,
}

fn run_quicksort(a: QuicksortArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.quicksort.unwrap_or_default();
    let mu = a.mu.or(s.mu);
    let sigma = a.sigma.or(s.sigma);
    if mu.is_some() != sigma.is_some() {
        return Err(CliError::Usage(
            "the family check needs both --mu and --sigma".into(),
        ));
    }
    let params = QuicksortParams {
        n: pick(a.n, s.n, 10_000),
        reps: pick(a.reps, s.reps, 1_000),
        mu,
        sigma,
        pool_depth: pick(a.pool_depth, s.pool_depth, 14),
        pool_batch: pick(a.pool_batch, s.pool_batch, 4_000),
        level: pick(a.level, s.level, 0.01),
        n_perm: pick(a.n_perm, s.n_perm, 499),
    };
    let meta = Meta::new("quicksort", a.seed, &params);
    let exact = exact_mean(params.n);
    let exact_closed = exact_mean_closed_form(params.n);
    let costs = normalized_costs(params.n, params.reps, a.seed);
    let nf = costs.len() as f64;
    let cost_mean = costs.iter().sum::<f64>() / nf;
    let cost_variance = costs.iter().map(|v| (v - cost_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let limit_variance = 7.0 - 2.0 * PI * PI / 3.0;
    println!(
        "n = {}: exact mean {exact:.4}, normalized cost mean {cost_mean:.5}, variance {cost_variance:.5} (limit {limit_variance:.5})",
        params.n
    );
    let family_test = match (mu, sigma) {
        (Some(mu), Some(sigma)) => {
            let model = BasicSequenceModel::quicksort();
            let (profile, report) = profile_and_report(
                &model,
                FindAlphaOptions {
                    seed: a.seed,
                    ..FindAlphaOptions::default()
                },
            )?;
            let pool = sample_coupled(
                &profile,
                &report,
                &SampleOptions {
                    depth: params.pool_depth,
                    batch: params.pool_batch,
                    seed: a.seed,
                },
            )?;
            let opts = TestOptions {
                level: params.level,
                n_perm: params.n_perm,
                seed: a.seed,
                ..TestOptions::default()
            };
            let outcome =
                limit_family_check(mu, sigma, params.n, params.reps, &pool, &opts, a.seed)?;
            println!(
                "family member (mu = {mu}, sigma = {sigma}): {} statistic = {:.6}, p = {:.4} -> {}",
                statistic_name(outcome.statistic_kind),
                outcome.statistic,
                outcome.p_value,
                if outcome.reject { "REJECT" } else { "consistent" }
            );
            Some(outcome)
        }
        _ => None,
    };
    let reject = family_test.as_ref().is_some_and(|o| o.reject);
    let artifact = QuicksortArtifact {
        command: meta.command,
        seed: meta.seed,
        config_sha256: meta.digest.clone(),
        params,
        exact_mean: exact,
        exact_mean_closed_form: exact_closed,
        cost_mean,
        cost_variance,
        limit_variance,
        family_test,
    };
    let path = write_json(dir, &pick(a.out, s.out, "quicksort.json".into()), &artifact)?;
    println!("wrote {}", path.display());
    Ok(if reject { 1 } else { 0 })
}

#[derive(Serialize)]
struct SuiteParams {}

#[derive(Serialize)]
struct SuiteArtifact {
    command: &'static str,
    seed: u64,
    config_sha256: String,
    report: smoothfix_core::suite::SuiteReport,
}

fn run_suite(a: SuiteArgs, file: FileConfig, dir: &Path) -> Result<u8, CliError> {
    let s = file.suite.unwrap_or_default();
    let meta = Meta::new("suite", a.seed, &SuiteParams {});
    let report = run_all(a.seed);
    for r in &report.results {
        println!(
            "criterion {:>2}  {:<44}  {}  [{:>6.1}s]  {}",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.elapsed_secs,
            r.detail
        );
    }
    let all_passed = report.all_passed;
    let artifact = SuiteArtifact {
        command: meta.command,
        seed: meta.seed,
        config_sha256: meta.digest.clone(),
        report,
    };
    let path = write_json(dir, &pick(a.out, s.out, "suite.json".into()), &artifact)?;
    println!("wrote {}", path.display());
    Ok(if all_passed { 0 } else { 1 })
}
