//! `iocp`: solve, benchmark and inspect integer optimal control problems.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use iocp_core::harness::{emit_solution, random_start_within, run_benchmark_with, sample_rng, BenchmarkSpec, THREADS_ENV};
use iocp_core::io::{parse_columns, read_control, write_control};
use iocp_core::models::{build_model, ModelParams};
use iocp_core::optimality::{first_order, second_order, SecondOrderOptions};
use iocp_core::subproblem::{solve, SubproblemInstance};
use iocp_core::trust_region::{minimize, TrustRegionConfig};
use iocp_core::{AdmissibleSet, ModelKind, PNorm};

#[derive(Parser)]
#[command(name = "iocp", version, about = "Trust-region solver for integer optimal control with TV_p switching costs")]
#[command(after_help = "The worker count for `bench` is read from IOCP_THREADS (default: all cores).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trust-region method once from a seeded random start.
    Solve(SolveArgs),
    /// Run a batch of seeded samples described by a JSON spec.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the stationarity residuals and second-order flags of a control.
    CheckStationarity(CheckArgs),
    /// Solve one linearized subproblem and print its value.
    Subproblem(SubproblemArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    /// JSON file with model parameter overrides.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    /// Defaults to the model's exponent.
    #[arg(long)]
    p: Option<PNorm>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximal number of switches per iterate.
    #[arg(long)]
    sigma_max: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    control: PathBuf,
    /// Also write the residual table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SubproblemArgs {
    /// Current iterate, one row `t v_1 … v_M` per cell.
    #[arg(long)]
    control: PathBuf,
    /// Gradient samples on the same grid.
    #[arg(long)]
    gradient: PathBuf,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value = "2")]
    p: PNorm,
    #[arg(long)]
    sigma_max: Option<usize>,
    /// `unit:M`, `box:LO:HI:M` or `a,b;c,d;…`; defaults to the integer box
    /// spanned by the control's values.
    #[arg(long)]
    alphabet: Option<AdmissibleSet>,
    /// Defaults to the one implied by the row times.
    #[arg(long)]
    horizon: Option<f64>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn load_params(path: Option<&Path>) -> Result<ModelParams> {
    match path {
        None => Ok(ModelParams::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ModelParams::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(args) => run_solve(args),
        Command::Bench { spec, out } => run_bench(&spec, out),
        Command::CheckStationarity(args) => run_check(args),
        Command::Subproblem(args) => run_subproblem(args),
    }
}

fn run_solve(args: SolveArgs) -> Result<()> {
    let params = load_params(args.model.params.as_deref())?;
    let model = build_model(args.model.model, args.n, &params)?;
    let p = args.p.unwrap_or_else(|| model.default_p());
    let beta = args.beta.unwrap_or_else(|| model.default_beta());
    let cfg = TrustRegionConfig {
        switch_limit: args.sigma_max,
        ..TrustRegionConfig::default()
    };
    let start = random_start_within(model.as_ref(), &mut sample_rng(args.seed, 0), args.sigma_max);
    let res = minimize(model.as_ref(), &start, &cfg, p, beta)?;
    fs::create_dir_all(&args.out)?;
    res.write_trace(fs::File::create(args.out.join("trace.csv"))?)?;
    emit_solution(&res.control, model.as_ref(), &args.out)?;
    println!(
        "objective {:.10} tv {:.6} switches {} outer {} termination {:?} seconds {:.3}",
        res.objective,
        res.tv,
        res.control.switch_count(),
        res.outer_iterations(),
        res.termination,
        res.seconds
    );
    Ok(())
}

fn run_bench(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = BenchmarkSpec::from_json(&text)?;
    let model = build_model(spec.model, spec.cells, &spec.params)?;
    let res = run_benchmark_with(model.as_ref(), &spec)?;
    let mut lock = io::stdout().lock();
    writeln!(lock, "{:<20} {:>14} {:>14} {:>14} {:>14}", "column", "min", "max", "mean", "median")?;
    for a in res.aggregates() {
        writeln!(lock, "{:<20} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}", a.column, a.min, a.max, a.mean, a.median)?;
    }
    writeln!(lock, "{} samples, {} failures", res.samples.len(), res.failures.len())?;
    if let Some(dir) = out.or(spec.output.clone()) {
        res.write_dir(&dir, model.as_ref())?;
        writeln!(lock, "wrote {}", dir.display())?;
    }
    if res.samples.is_empty() {
        bail!("every sample failed; set {THREADS_ENV}=1 to reproduce sequentially");
    }
    Ok(())
}

fn run_check(args: CheckArgs) -> Result<()> {
    let params = load_params(args.model.params.as_deref())?;
    let text = fs::read_to_string(&args.control).with_context(|| format!("reading {}", args.control.display()))?;
    let cells = parse_columns(&text)?.times.len();
    let model = build_model(args.model.model, cells, &params)?;
    let u = read_control(&text, model.alphabet().clone(), Some(model.horizon()))?;
    let report = first_order(model.as_ref(), &u)?;

    let mut out = io::stdout().lock();
    writeln!(out, "{:>4} {:>12} {:>6} {:>24} {:>14}", "j", "t_j", "cell", "jump", "residual")?;
    for (j, ((t, c), (mu, r))) in report
        .times
        .iter()
        .zip(&report.cells)
        .zip(report.jumps.iter().zip(&report.residuals))
        .enumerate()
    {
        writeln!(out, "{:>4} {:>12.6} {:>6} {:>24} {:>14.6e}", j + 1, t, c, format!("{mu:?}"), r)?;
    }
    writeln!(out, "residual norm {:.6e} (gradient scale {:.3e})", report.norm, report.gradient_scale)?;
    writeln!(out, "first order satisfied: {}", report.satisfied())?;
    match second_order(model.as_ref(), &u, &SecondOrderOptions::default()) {
        Ok(so) => {
            writeln!(out, "J = {:?}, min eigenvalue {:.6e}", so.j_set, so.min_eigenvalue)?;
            writeln!(out, "SONC2 {} SONC3 {} SOEC2 {} SOEC3 {}", so.sonc2, so.sonc3, so.soec2, so.soec3)?;
        }
        Err(e) => writeln!(out, "second order: not evaluated ({e})")?,
    }
    let mut csv = String::from("j,t,cell,jump,residual\n");
    for (j, ((t, c), (mu, r))) in report
        .times
        .iter()
        .zip(&report.cells)
        .zip(report.jumps.iter().zip(&report.residuals))
        .enumerate()
    {
        let jump: Vec<String> = mu.iter().map(i64::to_string).collect();
        csv.push_str(&format!("{},{t},{c},{},{r}\n", j + 1, jump.join(" ")));
    }
    match args.csv {
        Some(path) => fs::write(path, csv)?,
        None => write!(out, "\n{csv}")?,
    }
    Ok(())
}

fn bounding_box(values: &nalgebra::DMatrix<f64>) -> Result<AdmissibleSet> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo.fract() != 0.0 || hi.fract() != 0.0 {
        bail!("control values must be integers");
    }
    let (lo, hi) = (lo as i64, hi as i64);
    Ok(AdmissibleSet::lattice_box(lo, hi.max(lo + 1), values.ncols()))
}

fn run_subproblem(args: SubproblemArgs) -> Result<()> {
    let text = fs::read_to_string(&args.control).with_context(|| format!("reading {}", args.control.display()))?;
    let alphabet = match args.alphabet {
        Some(a) => a,
        None => bounding_box(&parse_columns(&text)?.values)?,
    };
    let u = read_control(&text, Arc::new(alphabet), args.horizon)?;
    let gtext = fs::read_to_string(&args.gradient).with_context(|| format!("reading {}", args.gradient.display()))?;
    let g = parse_columns(&gtext)?.values;
    let (sol, _) = solve(&SubproblemInstance {
        current: &u,
        gradient: &g,
        p: args.p,
        beta: args.beta,
        budget: args.budget,
        switch_limit: args.sigma_max,
    })?;
    let mut out = io::stdout().lock();
    write_control(&mut out, &sol.control)?;
    writeln!(out, "# value {:.17e} deviation {}", sol.value, sol.deviation)?;
    Ok(())
}
