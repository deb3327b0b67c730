//! Command-line front end: solve the game equations, extract values,
//! slice value functions, and roll out closed-loop trajectories.
//!
//! Exit codes: 0 success; 2 configuration/input errors (bad config or
//! container, out-of-range queries); 3 numerical failures (blow-up,
//! rollout escaping the grid); 4 infeasible rollout start.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use hjgames_core::{
    extract_vartheta, level_slice, oracle_solve, rollout, solve_with_stats, BPolicy, HjError,
    Real, RealValueFunction, ValueFunction,
};

mod config;
mod container;
mod csvout;

use config::RunConfig;
use csvout::fmt_f64;

/// Error with a process exit code attached.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<HjError<Real>> for CliError {
    fn from(e: HjError<Real>) -> Self {
        let code = match &e {
            HjError::Config(_) | HjError::Domain(_) | HjError::Evaluation(_) => 2,
            HjError::Blowup { .. } | HjError::Escape { .. } => 3,
            HjError::Infeasible(_) => 4,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "hjgames", version, about = "Level-set solver for state-constrained zero-sum games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured HJ equation and write a VF01 container.
    Solve(SolveArgs),
    /// Extract the game value at a state from a solved container.
    Extract(ExtractArgs),
    /// Export a fixed-z slice of the value function as CSV.
    Slice(SliceArgs),
    /// Roll out the closed loop under value-derived controls.
    Rollout(RolloutArgs),
    /// Run the brute-force reference solver and write a VF01 container.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output container path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// VF01 container produced by `solve` or `oracle`.
    #[arg(long)]
    value: PathBuf,
    /// Query time within the stored stamps.
    #[arg(long)]
    time: Real,
    /// Comma-separated state coordinates.
    #[arg(long)]
    point: String,
    /// Safety margin: report the smallest z with V <= -margin.
    #[arg(long, default_value_t = 0.0)]
    margin: Real,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    value: PathBuf,
    #[arg(long)]
    time: Real,
    /// Cost-budget level to slice at.
    #[arg(long)]
    z: Real,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RolloutArgs {
    /// VF01 container with the solved value function.
    #[arg(long)]
    value: PathBuf,
    /// Run configuration (problem definition and lattice resolution).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated start state.
    #[arg(long)]
    x0: String,
    /// Player B policy: "optimal", "constant:<v1,v2,..>", or "fixed:<csv path>".
    #[arg(long, default_value = "optimal")]
    b_policy: String,
    /// Control refresh interval (defaults to the container's stamp spacing).
    #[arg(long)]
    dt: Option<Real>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    // Optional worker cap; errors only if a pool already exists, which is
    // fine to ignore.
    if let Ok(v) = std::env::var("HJ_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Slice(args) => cmd_slice(args),
        Command::Rollout(args) => cmd_rollout(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn parse_point(text: &str) -> Result<Vec<Real>, CliError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<Real>()
                .map_err(|e| CliError::config(format!("bad coordinate '{f}': {e}")))
        })
        .collect()
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let spec = cfg.build_problem()?;
    let grid = std::sync::Arc::new(cfg.build_grid()?);
    let opts = cfg.scheme_options();
    let started = Instant::now();
    let (vf, stats) = solve_with_stats(
        &spec,
        &grid,
        cfg.variant.into(),
        cfg.mode.into(),
        &opts,
        cfg.stamps,
    )?;
    let elapsed = started.elapsed();
    container::write_value_function(&args.out, &vf)?;

    let v0 = vf.snapshot(0).values();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in v0 {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let dims: Vec<String> = grid.axes().iter().map(|a| a.count().to_string()).collect();
    println!(
        "solved {:?}/{:?} on {} grid ({} nodes): {} sub-steps (dt {:.3e}) in {:.2?}; V(0) in [{:.4}, {:.4}]; wrote {}",
        vf.variant(),
        vf.mode(),
        dims.join("x"),
        grid.num_points(),
        stats.sub_steps,
        stats.dt,
        elapsed,
        lo,
        hi,
        args.out.display()
    );
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let vf = container::read_value_function(&args.value)?;
    let point = parse_point(&args.point)?;
    let q = extract_vartheta(&vf, args.time, &point, args.margin)?;
    if q.saturated {
        println!("inf (saturated)");
    } else {
        println!("{}", fmt_f64(q.value));
    }
    Ok(())
}

fn cmd_slice(args: SliceArgs) -> Result<(), CliError> {
    let vf = container::read_value_function(&args.value)?;
    let slice = level_slice(&vf, args.time, args.z)?;
    csvout::write_slice(&args.out, &slice)?;
    println!(
        "wrote {} ({} nodes, {} in the sub-zero region)",
        args.out.display(),
        slice.values().len(),
        slice.sub_zero_count()
    );
    Ok(())
}

fn parse_b_policy(text: &str) -> Result<BPolicy<Real>, CliError> {
    if text == "optimal" {
        return Ok(BPolicy::OptimalFromV);
    }
    if let Some(rest) = text.strip_prefix("constant:") {
        return Ok(BPolicy::Constant(parse_point(rest)?));
    }
    if let Some(rest) = text.strip_prefix("fixed:") {
        let body = std::fs::read_to_string(rest)
            .map_err(|e| CliError::config(format!("cannot read b sequence {rest}: {e}")))?;
        let seq: Vec<Vec<Real>> = body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(parse_point)
            .collect::<Result<_, _>>()?;
        return Ok(BPolicy::Fixed(seq));
    }
    Err(CliError::config(format!(
        "bad b-policy '{text}' (expected optimal | constant:<vals> | fixed:<path>)"
    )))
}

fn cmd_rollout(args: RolloutArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let spec = cfg.build_problem()?;
    let vf: RealValueFunction = container::read_value_function(&args.value)?;
    let policy = parse_b_policy(&args.b_policy)?;
    let dt = args.dt.unwrap_or_else(|| {
        let t = vf.times();
        t[1] - t[0]
    });
    let opts = cfg.scheme_options();
    match rollout(
        &spec,
        &vf,
        vf.mode(),
        vf.variant(),
        &parse_point(&args.x0)?,
        &policy,
        dt,
        &opts,
    ) {
        Ok(traj) => {
            csvout::write_trajectory(&args.out, &traj)?;
            println!(
                "wrote {} ({} samples, max constraint {:.4})",
                args.out.display(),
                traj.len(),
                traj.max_constraint()
            );
            Ok(())
        }
        Err(HjError::Escape { time, partial }) => {
            csvout::write_trajectory(&args.out, &partial)?;
            Err(CliError {
                code: 3,
                message: format!(
                    "rollout escaped the grid at t={time}; partial trajectory written to {}",
                    args.out.display()
                ),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let spec = cfg.build_problem()?;
    let grid = std::sync::Arc::new(cfg.build_grid()?);
    let opts = cfg.scheme_options();
    let started = Instant::now();
    let table = oracle_solve(
        &spec,
        &grid,
        cfg.variant.into(),
        cfg.mode.into(),
        (opts.lattice_a, opts.lattice_b),
        cfg.stamps,
    )?;
    let vf = ValueFunction::from_parts(
        grid.clone(),
        table.times().to_vec(),
        table.snapshots().iter().map(|s| s.values().to_vec()).collect(),
        table.variant(),
        table.mode(),
    )?;
    container::write_value_function(&args.out, &vf)?;
    println!(
        "oracle {:?}/{:?} on {} nodes, {} stamps in {:.2?}; wrote {}",
        table.variant(),
        table.mode(),
        grid.num_points(),
        table.times().len(),
        started.elapsed(),
        args.out.display()
    );
    Ok(())
}
