use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use explab::acceptance::{run_all, run_criterion, AcceptanceOptions, CRITERIA};
use explab::config::{self, parse_reference, parse_steps, parse_steps_text};
use explab::problems::build_problem;
use explab::report::{emit_report, ReportFormat};
use explab::sweep::{parse_norms, run_sweep, SweepConfig};

/// Convergence-order experiments for exponential integrators with
/// boundary-data corrections.
#[derive(Parser)]
#[command(name = "explab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method x correction x step-size sweep and emit the error table.
    Run(RunArgs),
    /// Run the acceptance suite and print pass/fail per criterion.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file (TOML); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem id: ex1..ex5.
    #[arg(long)]
    problem: Option<String>,
    /// Method: euler | strehmel-weiner | krogstad | gauss-quadrature:<s> |
    /// radau-quadrature:<s>. A comma list emits one section per method
    /// (pretty format only).
    #[arg(long)]
    method: Option<String>,
    /// Correction strategy: analytic:<id> | harmonic | stationary |
    /// stationary-identity | chain:<m>.
    #[arg(long)]
    correction: Option<String>,
    /// Comma list of step sizes, or `ladder:<start>,<count>`.
    #[arg(long)]
    steps: Option<String>,
    /// Comma list of norms: l1, l2, linf, xalpha:<a>.
    #[arg(long)]
    norms: Option<String>,
    /// Interior grid points (per direction in 2D).
    #[arg(long)]
    grid: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | pretty (default: csv to files, pretty to stdout).
    #[arg(long)]
    format: Option<String>,
    /// Reference override `method:tau` (e.g. `krogstad:2.5e-5`).
    #[arg(long)]
    reference: Option<String>,
    /// Concurrent step-size runs.
    #[arg(long)]
    parallel: Option<usize>,
    /// Reference-solution cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Use the full-scale grid and reference step instead of desk scale.
    #[arg(long)]
    full_scale: bool,
    /// Skip the error-floor estimation runs.
    #[arg(long)]
    no_floor: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run a single criterion (1..=8) instead of all.
    #[arg(long)]
    criterion: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
    /// List the criteria and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(path) => config::load(path).context("loading config file")?,
        None => Default::default(),
    };
    let problem_id = args
        .problem
        .or(file.problem)
        .context("--problem is required (ex1..ex5)")?;
    let spec = build_problem(&problem_id)?;

    let full_scale = args.full_scale || file.full_scale.unwrap_or(false);
    let grid_n = args
        .grid
        .or(file.grid)
        .unwrap_or(if full_scale { spec.full_n } else { spec.default_n });
    let steps = match (&args.steps, &file.steps) {
        (Some(s), _) => parse_steps_text(s)?,
        (None, Some(spec_steps)) => parse_steps(spec_steps)?,
        (None, None) => spec.default_ladder.clone(),
    };
    let norms = parse_norms(
        &args.norms.or(file.norms).unwrap_or_else(|| "l1,l2,linf".to_string()),
    )?;
    let reference_override = match args.reference.or(file.reference) {
        Some(s) => Some(parse_reference(&s)?),
        None => None,
    };
    let methods: Vec<String> = args
        .method
        .or(file.method)
        .unwrap_or_else(|| "gauss-quadrature:2".to_string())
        .split(',')
        .map(|m| m.trim().to_string())
        .collect();
    let base = SweepConfig {
        method: String::new(),
        correction: args
            .correction
            .or(file.correction)
            .unwrap_or_else(|| spec.default_correction.to_string()),
        steps,
        norms,
        grid_n,
        parallel: args
            .parallel
            .or(file.parallel)
            .unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2).min(8)
            }),
        reference_override,
        full_reference: full_scale,
        cache_dir: Some(
            args.cache_dir
                .or(file.cache_dir)
                .unwrap_or_else(|| PathBuf::from(".explab-cache")),
        ),
        floor_check: !args.no_floor,
    };

    let out_path = args.out.or(file.out);
    let format = match args.format.or(file.format).as_deref() {
        Some("csv") => ReportFormat::Csv,
        Some("pretty") => ReportFormat::Pretty,
        Some(other) => bail!("unknown format `{other}` (csv | pretty)"),
        None if out_path.is_some() => ReportFormat::Csv,
        None => ReportFormat::Pretty,
    };
    if methods.len() > 1 && format == ReportFormat::Csv {
        bail!("the CSV contract holds one method per file; use pretty format for method sections");
    }

    let mut sink: Box<dyn Write> = match &out_path {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    for (i, method) in methods.iter().enumerate() {
        let cfg = SweepConfig { method: method.clone(), ..base.clone() };
        let report = run_sweep(&spec, &cfg)?;
        if i > 0 {
            writeln!(sink)?;
        }
        emit_report(&report, format, &mut sink)?;
    }
    if let Some(path) = out_path {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> anyhow::Result<()> {
    if args.list {
        for (i, name) in CRITERIA.iter().enumerate() {
            println!("criterion {}: {name}", i + 1);
        }
        return Ok(());
    }
    let mut opts = AcceptanceOptions::default();
    if let Some(dir) = args.cache_dir {
        opts.cache_dir = Some(dir);
    }
    if let Some(p) = args.parallel {
        opts.parallel = p.max(1);
    }
    let outcomes = match args.criterion {
        Some(i) => {
            if !(1..=CRITERIA.len()).contains(&i) {
                bail!("criterion index {i} out of 1..={}", CRITERIA.len());
            }
            vec![run_criterion(i, &opts)]
        }
        None => run_all(&opts),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut all_passed = true;
    for o in &outcomes {
        writeln!(
            out,
            "criterion {} [{}]: {} ({:.1}s)",
            o.index,
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.seconds
        )?;
        for d in &o.details {
            writeln!(out, "    {d}")?;
        }
        all_passed &= o.passed;
    }
    writeln!(
        out,
        "{}",
        if all_passed { "acceptance: all criteria PASS" } else { "acceptance: FAILURES present" }
    )?;
    if !all_passed {
        std::process::exit(1);
    }
    Ok(())
}
