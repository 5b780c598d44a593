//! `ial`: generate instances, solve them, build references and verify the
//! convergence bounds on recorded traces.
//!
//! Exit codes: 0 pass, 1 bound violation, 2 inner budget abort,
//! 3 reference failure, 4 I/O or usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ial_core::experiment::{self, SweepConfig};
use ial_core::inner::{InnerConfig, InnerMethod};
use ial_core::io;
use ial_core::outer::{BudgetPolicy, OuterConfig, StopFloors, ToleranceSchedule};
use ial_core::problem::{generate, Family};
use ial_core::theory::compute_reference;
use ial_core::Error;

const PASS: u8 = 0;
const VIOLATION: u8 = 1;
const BUDGET_ABORT: u8 = 2;
const REFERENCE_FAILURE: u8 = 3;
const IO_OR_USAGE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ial",
    version,
    about = "Inexact augmented Lagrangian solver with certified inner stops"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance and print its SHA-256.
    Generate(GenerateArgs),
    /// Run the outer loop on an instance and write a run bundle.
    Solve(SolveArgs),
    /// Check every bound on a run bundle.
    Verify(VerifyArgs),
    /// Solve and verify every combination of parameter lists.
    Sweep(SweepArgs),
    /// Compute a high-accuracy reference solution.
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// simplex_ls, box_qp or l1_basis_pursuit.
    family: String,
    n: usize,
    m: usize,
    /// Seed (alternative to --seed).
    #[arg(conflicts_with = "seed")]
    seed_pos: Option<u64>,
    /// Output path (alternative to --out).
    #[arg(conflicts_with = "out")]
    out_pos: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Inner iteration budget per outer iteration.
    #[arg(long, default_value_t = ial_core::inner::DEFAULT_BUDGET)]
    inner_budget: usize,
    /// Start every subproblem from x¹ instead of the previous iterate.
    #[arg(long)]
    cold_start: bool,
    /// Seed recorded in the trace metadata.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 500)]
    outer_iters: usize,
    /// fw or apg.
    #[arg(long, default_value = "apg")]
    inner: String,
    #[command(flatten)]
    run: RunArgs,
    /// Continue with the best iterate when an inner solve runs out of budget.
    #[arg(long)]
    accept_best: bool,
    /// Stop early once the certified gap falls to this value (needs --stop-feas).
    #[arg(long, requires = "stop_feas")]
    stop_gap: Option<f64>,
    #[arg(long, requires = "stop_gap")]
    stop_feas: Option<f64>,
    /// Bundle directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Bundle directory written by `solve`.
    bundle: PathBuf,
    #[arg(long, default_value_t = ial_core::augmented::REFERENCE_TOL)]
    reference_tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1")]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1")]
    sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1")]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "apg")]
    inner: Vec<String>,
    #[arg(long, default_value_t = 500)]
    outer_iters: usize,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = ial_core::augmented::REFERENCE_TOL)]
    reference_tol: f64,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Args)]
struct ReferenceArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = ial_core::augmented::REFERENCE_TOL)]
    tol: f64,
    #[arg(long, default_value = "reference.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { IO_OR_USAGE } else { PASS });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Reference(a) => cmd_reference(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Reference(_)) => REFERENCE_FAILURE,
        Some(Error::BudgetExceeded { .. } | Error::OuterAborted { .. }) => BUDGET_ABORT,
        _ => IO_OR_USAGE,
    }
}

fn parse_method(s: &str) -> anyhow::Result<InnerMethod> {
    Ok(s.parse::<InnerMethod>()?)
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<u8> {
    let family: Family = a.family.parse()?;
    let seed = a.seed.or(a.seed_pos).unwrap_or(0);
    let Some(out) = a.out.or(a.out_pos) else {
        bail!("an output path is required (positional or --out)");
    };
    let instance = generate(family, a.n, a.m, seed)?.instance;
    let hash = io::write_instance(&instance, &out).with_context(|| format!("writing {}", out.display()))?;
    println!("{hash}");
    Ok(PASS)
}

fn outer_config(a: &SolveArgs) -> anyhow::Result<OuterConfig> {
    let inner = InnerConfig::for_method(parse_method(&a.inner)?).with_budget(a.run.inner_budget);
    let mut cfg =
        OuterConfig::new(a.beta, a.outer_iters, ToleranceSchedule::power_law(a.sigma, a.alpha)?).with_inner(inner);
    cfg.warm_start = !a.run.cold_start;
    if a.accept_best {
        cfg.on_budget_exceeded = BudgetPolicy::AcceptBest;
    }
    if let (Some(gap), Some(feas)) = (a.stop_gap, a.stop_feas) {
        cfg.stop_floors = Some(StopFloors { gap, feas });
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<u8> {
    let cfg = outer_config(&a)?;
    let bundle = experiment::solve_instance_file(&a.instance, &cfg, a.run.seed, &a.out)
        .with_context(|| format!("solving {}", a.instance.display()))?;
    let s = &bundle.summary;
    println!("bundle       {}", bundle.dir.display());
    println!("instance     {} ({})", s.instance_name, s.instance_hash);
    println!("outer iters  {}", s.outer_iters);
    println!("inner iters  {}", s.total_inner_iters);
    println!("final gap    {}", fmt_opt(s.final_gap));
    println!("final feas   {}", fmt_opt(s.final_feas));
    println!("final F      {}", fmt_opt(s.final_objective));
    println!("wall time    {:.3} s", s.wall_time_s);
    if let Some(reason) = &s.aborted {
        eprintln!("inner budget exhausted, partial trace written: {reason}");
        return Ok(BUDGET_ABORT);
    }
    Ok(PASS)
}

fn cmd_verify(a: VerifyArgs) -> anyhow::Result<u8> {
    if !a.bundle.join(io::TRACE_CSV).is_file() {
        bail!("no {} in {}", io::TRACE_CSV, a.bundle.display());
    }
    let outcome = experiment::verify_bundle(&a.bundle, a.reference_tol)
        .with_context(|| format!("verifying {}", a.bundle.display()))?;
    for c in &outcome.summary.checks {
        let status = match (c.skipped, c.passed) {
            (true, _) => "SKIP".to_string(),
            (false, true) => "PASS".to_string(),
            (false, false) => format!("FAIL (first violation at k = {})", c.first_violation_k.unwrap_or(0)),
        };
        println!("{:<28} {status}", c.check);
    }
    println!("F(x) - F*   {}", fmt_opt(outcome.summary.final_objective_gap));
    println!("delta_K     {}", fmt_opt(outcome.summary.final_delta));
    Ok(if outcome.passed() { PASS } else { VIOLATION })
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<u8> {
    let methods = a
        .inner
        .iter()
        .map(|s| parse_method(s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cfg = SweepConfig {
        betas: a.beta,
        sigmas: a.sigma,
        alphas: a.alpha,
        methods,
        outer_iters: a.outer_iters,
        inner_budget: Some(a.run.inner_budget),
        reference_tol: a.reference_tol,
        warm_start: !a.run.cold_start,
        seed: a.run.seed,
    };
    let rows = experiment::run_sweep(&a.instance, &cfg, &a.out)?;
    println!(
        "{:<8} {:>6} {:>6} {:>6} {:>4} {:>13} {:>9}  status",
        "run", "alpha", "sigma", "beta", "inner", "final_delta", "slope"
    );
    for r in &rows {
        println!(
            "{:<8} {:>6} {:>6} {:>6} {:>4} {:>13} {:>9}  {}",
            r.run,
            r.alpha,
            r.sigma,
            r.beta,
            r.method,
            fmt_opt(r.final_delta),
            r.slope.map_or_else(|| "-".into(), |s| format!("{s:.3}")),
            r.status
        );
    }
    println!("summary      {}", a.out.join(experiment::SWEEP_SUMMARY_CSV).display());
    let code = if rows.iter().any(|r| r.status.starts_with("aborted")) {
        BUDGET_ABORT
    } else if rows.iter().any(|r| r.passed == Some(false)) {
        VIOLATION
    } else if rows.iter().any(|r| r.status.starts_with("error")) {
        IO_OR_USAGE
    } else {
        PASS
    };
    Ok(code)
}

fn cmd_reference(a: ReferenceArgs) -> anyhow::Result<u8> {
    let (p, hash) = read_instance(&a.instance)?;
    let r = compute_reference(&p, a.beta, a.tol)?;
    io::write_reference(&a.out, &r, &hash).with_context(|| format!("writing {}", a.out.display()))?;
    println!("F*           {:.16e}", r.f_star);
    println!("|lambda*|    {:.6e}", r.lambda_norm());
    println!("feas         {:.3e}", r.feas);
    println!("gap          {:.3e}", r.gap);
    println!("outer iters  {}", r.outer_iters);
    Ok(PASS)
}

fn read_instance(path: &Path) -> anyhow::Result<(ial_core::problem::ProblemInstance, String)> {
    io::read_instance(path).with_context(|| format!("reading {}", path.display()))
}
