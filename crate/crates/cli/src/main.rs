//! `pcsplit`: solve, certify, compare and trace prediction-correction
//! splitting schemes on problems stored as JSON.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pcsplit::certify;
use pcsplit::correction::DEFAULT_ALPHA;
use pcsplit::correction::DEFAULT_NU;
use pcsplit::driver::{self, CustomSplit, Status};
use pcsplit::predict::IterateState;
use pcsplit::problem::{self, Sense};
use pcsplit::{io, Error, ProblemInstance, RunConfig, Runner, Scheme};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use report::{SummaryRow, TraceWriter};

#[derive(Parser, Debug)]
#[command(
    name = "pcsplit",
    version,
    about = "Prediction-correction splitting for separable convex programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scheme and write solution.json (and trace.csv with --monitor).
    Solve(JobArgs),
    /// Build the correction plan and check its convergence certificate.
    Certify(JobArgs),
    /// Run several schemes on the same problem and tabulate the outcomes.
    Compare(JobArgs),
    /// Solve with the contraction monitor on; always writes trace.csv.
    Trace(JobArgs),
}

#[derive(Args, Debug)]
struct JobArgs {
    /// Problem file (JSON).
    problem: PathBuf,

    /// scprsm, gs3-alg1, gs3-alg2, gs3-alg3, multi-pd, multi-dp or
    /// custom-split. Repeat for compare.
    #[arg(long = "scheme", value_name = "S")]
    schemes: Vec<Scheme>,

    #[arg(long, default_value_t = 1.0)]
    beta: f64,

    /// Relaxation for scprsm, in (0,1).
    #[arg(long, default_value_t = 0.5)]
    mu: f64,

    #[arg(long, default_value_t = DEFAULT_NU)]
    nu: f64,

    /// Blend weight for custom-split without a user matrix.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,

    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    #[arg(long, default_value_t = 5000)]
    max_iters: usize,

    /// Seed for the certify probe.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Track the contraction inequality against a reference solution.
    #[arg(long)]
    monitor: bool,

    /// Run even if the plan fails its certificate.
    #[arg(long)]
    force: bool,

    /// Output directory. Defaults to the working directory for solve and
    /// trace; compare writes compare.csv only when given.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// JSON matrix D for custom-split, in the scheme's corrected coordinates.
    #[arg(long, value_name = "FILE", conflicts_with = "split_g")]
    split_d: Option<PathBuf>,

    /// JSON matrix G for custom-split.
    #[arg(long, value_name = "FILE")]
    split_g: Option<PathBuf>,

    /// Random points tried by the certify probe.
    #[arg(long, default_value_t = 200)]
    probes: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PCSPLIT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap's own usage errors use 2, which is reserved for the iteration cap.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(false)` means a run stopped at the iteration cap (or, for compare,
/// some row did not converge).
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Solve(a) => cmd_solve(&a, false),
        Command::Trace(a) => cmd_solve(&a, true),
        Command::Certify(a) => cmd_certify(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn load(args: &JobArgs) -> Result<ProblemInstance> {
    io::load_problem(&args.problem).with_context(|| format!("reading {}", args.problem.display()))
}

fn read_matrix(path: &Path) -> Result<pcsplit::matrix::DenseMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    io::parse_matrix(&text).with_context(|| format!("parsing {}", path.display()))
}

fn config(args: &JobArgs, scheme: Scheme) -> Result<RunConfig> {
    let custom = match (&args.split_d, &args.split_g) {
        (Some(f), _) => Some(CustomSplit::D(read_matrix(f)?)),
        (_, Some(f)) => Some(CustomSplit::G(read_matrix(f)?)),
        _ => None,
    };
    Ok(RunConfig {
        scheme,
        beta: args.beta,
        mu: args.mu,
        nu: args.nu,
        alpha: args.alpha,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        monitor: args.monitor,
        force: args.force,
        custom,
    })
}

fn default_scheme(args: &JobArgs, p: &ProblemInstance) -> Scheme {
    if args.split_d.is_some() || args.split_g.is_some() {
        Scheme::CustomSplit
    } else if p.sense() == Sense::GreaterEqual {
        Scheme::MultiDp
    } else {
        match p.num_blocks() {
            2 => Scheme::ScPrsm,
            3 => Scheme::Gs3(pcsplit::correction::Gs3Alg::Alg1),
            _ => Scheme::MultiPd,
        }
    }
}

fn single_scheme(args: &JobArgs, p: &ProblemInstance) -> Result<Scheme> {
    match args.schemes.as_slice() {
        [] => Ok(default_scheme(args, p)),
        [s] => Ok(*s),
        _ => bail!("only compare accepts more than one --scheme"),
    }
}

fn cmd_solve(args: &JobArgs, trace: bool) -> Result<bool> {
    let p = load(args)?;
    let scheme = single_scheme(args, &p)?;
    let mut cfg = config(args, scheme)?;
    cfg.monitor |= trace;
    let runner = Runner::new(&p, cfg.clone()).with_context(|| format!("scheme {scheme}"))?;

    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut writer = if cfg.monitor {
        Some(TraceWriter::create(&out.join("trace.csv"))?)
    } else {
        None
    };
    let summary = runner
        .run(|r| {
            if let Some(w) = writer.as_mut() {
                w.write(r).map_err(std::io::Error::from)?;
            }
            Ok(())
        })
        .with_context(|| format!("scheme {scheme}"))?;

    let path = out.join("solution.json");
    fs::write(&path, report::solution_json(&summary))
        .with_context(|| format!("writing {}", path.display()))?;
    if summary.violations > 0 {
        log::warn!("{} contraction violations", summary.violations);
    }
    report::print_rows(&[SummaryRow::from_summary(&summary)])?;
    Ok(summary.status == Status::Converged)
}

fn cmd_certify(args: &JobArgs) -> Result<bool> {
    let p = load(args)?;
    let scheme = single_scheme(args, &p)?;
    let mut cfg = config(args, scheme)?;
    // Build the plans even when they fail, so the report can show why.
    cfg.force = true;
    let plans = driver::scheme_plans(&p, &cfg).with_context(|| format!("scheme {scheme}"))?;
    println!("scheme {scheme}, predictor {:?}", plans.kind);
    report::print_plan("executed", &plans.executed);
    report::print_plan("native", &plans.native);

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (xs, lambda) = certify::sample_omega(&p, 3.0, &mut rng);
    let state = IterateState::from_point(&p, &xs, &lambda);
    let worst = certify::prediction_vi_probe(
        &p,
        plans.kind,
        &plans.executed.q,
        &state,
        cfg.beta,
        cfg.mu,
        args.probes,
        &mut rng,
    )?;
    println!(
        "prediction probe: min {worst:e} over {} points (seed {})",
        args.probes, args.seed
    );
    if worst < -1e-8 {
        log::warn!("prediction probe went negative: {worst:e}");
    }

    match plans.executed.certificate.failure() {
        None => {
            println!("certificate: ok");
            Ok(true)
        }
        Some(reason) => bail!("certificate failed: {reason}"),
    }
}

/// Errors that mean a scheme does not apply, as opposed to a failed run.
fn is_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidProblem(_)
            | Error::InvalidParameter(_)
            | Error::Uncertified(_)
            | Error::NotSpd { .. }
            | Error::RankDeficient { .. }
            | Error::Unsupported(_)
    )
}

fn compare_row(p: &ProblemInstance, cfg: RunConfig) -> Result<SummaryRow> {
    let scheme = cfg.scheme;
    let runner = match Runner::new(p, cfg) {
        Ok(r) => r,
        Err(e) if is_rejection(&e) => return Ok(SummaryRow::rejected(scheme, e.to_string())),
        Err(e) => return Err(e).with_context(|| format!("scheme {scheme}")),
    };
    let summary = runner
        .run(|_| Ok(()))
        .with_context(|| format!("scheme {scheme}"))?;
    Ok(SummaryRow::from_summary(&summary))
}

fn cmd_compare(args: &JobArgs) -> Result<bool> {
    let p = load(args)?;
    let schemes: Vec<Scheme> = if args.schemes.is_empty() {
        // Default to every preset whose predictor fits the problem's shape.
        Scheme::ALL
            .into_iter()
            .filter(|&s| s != Scheme::CustomSplit && problem::validate_problem(&p, s.predictor(&p)).ok)
            .collect()
    } else {
        args.schemes.clone()
    };
    let configs = schemes
        .iter()
        .map(|&s| config(args, s))
        .collect::<Result<Vec<_>>>()?;
    let p = &p;
    let rows = std::thread::scope(|sc| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|cfg| sc.spawn(move || compare_row(p, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("compare worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    report::print_rows(&rows)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("compare.csv");
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        report::write_rows(&mut w, &rows)?;
        w.flush()?;
    }
    Ok(rows.iter().all(|r| r.status == "converged"))
}
