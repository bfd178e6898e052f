use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use pdlp::convergence::{kkt_residuals, ResidualSummary, SolveStatus};
use pdlp::generate::{generate_instance, InstanceKind, InstanceSpec};
use pdlp::mps::{read_mps, write_mps, MpsFormat};
use pdlp::output::{read_solution, solution_string};
use pdlp::solver::{solve, SolverOptions};
use pdlp::SolverError;

const EXIT_OPTIMAL: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_INPUT: u8 = 5;

#[derive(Parser)]
#[command(name = "pdlp", version, about = "Restarted primal-dual LP solver")]
struct Cli {
    /// Suppress progress logging (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an LP read from an MPS file.
    Solve(SolveArgs),
    /// Write a synthetic instance as MPS.
    Generate(GenerateArgs),
    /// Recompute residuals of a JSON solution against an MPS file.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Free,
    Fixed,
}

impl From<FormatArg> for MpsFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Free => MpsFormat::Free,
            FormatArg::Fixed => MpsFormat::Fixed,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "free")]
    format: FormatArg,
    #[arg(long, default_value_t = 1e-8)]
    eps_primal: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_dual: f64,
    /// Relative duality gap tolerance.
    #[arg(long, default_value_t = 1e-2)]
    rel_gap: f64,
    /// Iteration limit (main plus polishing).
    #[arg(long)]
    iters: Option<u64>,
    /// Time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    no_polish: bool,
    #[arg(long)]
    no_scaling: bool,
    /// Write the JSON document here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include x, y, r and certificate rays in the JSON document.
    #[arg(long)]
    arrays: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    RandomFeasible,
    RandomInfeasible,
    Transport,
    FeasibilitySystem,
}

impl From<KindArg> for InstanceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::RandomFeasible => InstanceKind::RandomFeasible,
            KindArg::RandomInfeasible => InstanceKind::RandomInfeasible,
            KindArg::Transport => InstanceKind::Transport,
            KindArg::FeasibilitySystem => InstanceKind::FeasibilitySystem,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "random-feasible")]
    kind: KindArg,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output MPS path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    input: PathBuf,
    solution: PathBuf,
    #[arg(long, value_enum, default_value = "free")]
    format: FormatArg,
    /// Allowed relative disagreement between reported and recomputed values.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => EXIT_OPTIMAL,
        SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => EXIT_INFEASIBLE,
        SolveStatus::IterationLimit | SolveStatus::TimeLimit => EXIT_LIMIT,
        SolveStatus::NumericalError => EXIT_NUMERICAL,
    }
}

fn input_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_INPUT
}

fn run_solve(args: &SolveArgs) -> u8 {
    let problem = match read_mps(&args.input, args.format.into()) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let mut options = SolverOptions {
        eps_primal: args.eps_primal,
        eps_dual: args.eps_dual,
        eps_rel_gap: args.rel_gap,
        time_limit: args.time_limit,
        threads: args.threads,
        enable_polishing: !args.no_polish,
        enable_scaling: !args.no_scaling,
        ..SolverOptions::default()
    };
    if let Some(k) = args.iters {
        options.iteration_limit = k;
    }
    info!(
        "phase=load name={} rows={} cols={} nnz={}",
        problem.name,
        problem.num_cons(),
        problem.num_vars(),
        problem.matrix.nnz()
    );
    let result = match solve(&problem, &options) {
        Ok(r) => r,
        Err(SolverError::Numerical(msg)) => {
            eprintln!("error: numerical failure: {msg}");
            return EXIT_NUMERICAL;
        }
        Err(e) => return input_error(e),
    };
    let doc = solution_string(&result, &problem.name, args.arrays);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, doc) {
                return input_error(format!("{}: {e}", path.display()));
            }
        }
        None => {
            let _ = std::io::stdout().write_all(doc.as_bytes());
        }
    }
    let (primal, dual) = result.reported_objectives();
    info!(
        "phase=done status={} primal_objective={primal:.10e} dual_objective={dual:.10e} iterations={}",
        result.status, result.statistics.iterations_total
    );
    status_code(result.status)
}

fn run_generate(args: &GenerateArgs) -> u8 {
    if args.m == 0 || args.n == 0 || !(args.density > 0.0 && args.density <= 1.0) {
        return input_error("m, n must be positive and density must lie in (0, 1]");
    }
    let spec = InstanceSpec { kind: args.kind.into(), m: args.m, n: args.n, density: args.density, seed: args.seed };
    let inst = generate_instance(&spec);
    let text = write_mps(&inst.problem);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                return input_error(format!("{}: {e}", path.display()));
            }
            if let Some(obj) = inst.optimal_objective {
                println!("optimal_objective={obj:.16e}");
            }
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    EXIT_OPTIMAL
}

fn agrees(reported: f64, recomputed: f64, tol: f64) -> bool {
    reported == recomputed
        || (reported.is_nan() && recomputed.is_nan())
        || (reported - recomputed).abs() <= tol * (1.0 + recomputed.abs())
}

fn run_check(args: &CheckArgs) -> u8 {
    let problem = match read_mps(&args.input, args.format.into()) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let doc = match read_solution(&args.solution) {
        Ok(d) => d,
        Err(e) => return input_error(e),
    };
    let (Some(x), Some(y), Some(r)) = (&doc.x, &doc.y, &doc.r) else {
        return input_error("solution document has no arrays; solve with --arrays");
    };
    if x.len() != problem.num_vars() || y.len() != problem.num_cons() || r.len() != problem.num_vars() {
        return input_error("solution dimensions do not match the problem");
    }
    let fresh = kkt_residuals(&problem, x, y, r);
    let fields: [(&str, fn(&ResidualSummary) -> f64); 6] = [
        ("primal_inf_norm", |s| s.primal_inf_norm),
        ("dual_inf_norm", |s| s.dual_inf_norm),
        ("primal_objective", |s| s.primal_objective),
        ("dual_objective", |s| s.dual_objective),
        ("abs_gap", |s| s.abs_gap),
        ("rel_gap", |s| s.rel_gap),
    ];
    let mut ok = true;
    for (name, get) in fields {
        let (a, b) = (get(&doc.residuals), get(&fresh));
        let same = agrees(a, b, args.tol);
        ok &= same;
        println!("{name} reported={a:.16e} recomputed={b:.16e} match={same}");
    }
    println!("status={} check={}", doc.status, if ok { "pass" } else { "fail" });
    if ok {
        EXIT_OPTIMAL
    } else {
        EXIT_CHECK_FAILED
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which would read as "infeasible".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OPTIMAL });
        }
    };
    let default_level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .format_timestamp(None)
        .init();
    let code = match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Generate(a) => run_generate(a),
        Command::Check(a) => run_check(a),
    };
    ExitCode::from(code)
}
