use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use cdanse::anderson::{AndersonConfig, InnerProduct};
use cdanse::bench::{self, ReferenceCache, Scenario, SuiteOptions, SuiteReport};
use cdanse::cda::NudgingMode;
use cdanse::plot::{render_svg, Curve};
use cdanse::solvers::{IterationTrace, Method, Status};
use cdanse::Error;

/// Exit code of a suite whose assertions did not all pass.
const EXIT_ASSERTION: u8 = 4;

#[derive(Parser)]
#[command(name = "cdanse", version, about = "Steady Navier-Stokes solvers with data assimilation")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Solve(SolveArgs),
    /// Run a benchmark suite.
    Suite(SuiteArgs),
    /// Render trace CSV files as an SVG convergence plot.
    Plot(PlotArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "CDANSE_OUT", default_value = "cdanse-out")]
    out: PathBuf,
    /// Overwrite an existing report.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    re: Option<f64>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// picard or newton.
    #[arg(long, default_value = "picard")]
    method: String,
    /// off, penalty or direct.
    #[arg(long, default_value = "off")]
    cda: String,
    /// Observation spacing; 1/H must be an integer dividing n.
    #[arg(long = "H")]
    h: Option<f64>,
    /// Nudging parameter for --cda penalty.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    allow_small_mu: bool,
    /// Also enforce observations at boundary nodes.
    #[arg(long)]
    include_boundary: bool,
    /// Anderson depth; omit to run without acceleration.
    #[arg(long)]
    aa_depth: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    aa_beta: f64,
    /// h1 or euclidean.
    #[arg(long, default_value = "h1")]
    aa_inner: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    lid_speed: f64,
    /// Scenario name used for the output files.
    #[arg(long)]
    name: Option<String>,
    /// Rerun the scenario described by a metadata file; scenario flags are ignored.
    #[arg(long)]
    from_metadata: Option<PathBuf>,
    /// Also write an SVG plot of the error history.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SuiteArgs {
    /// table1, musweep, enablement, newtonbasin or aa.
    name: String,
    /// Reynolds number(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    re: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Observation spacings, comma separated.
    #[arg(long = "H", value_delimiter = ',')]
    h: Vec<f64>,
    /// Nudging parameters for musweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    aa_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    aa_beta: f64,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Trace CSV files.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Trace column to plot.
    #[arg(long, default_value = "err_h1")]
    column: String,
    #[arg(long)]
    title: Option<String>,
    /// Output SVG file.
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let res = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Plot(a) => cmd_plot(a).map(|_| 0),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn coarse_count(h: f64, n: usize) -> Result<usize, Error> {
    let inv = 1.0 / h;
    let m = inv.round();
    if !(h > 0.0) || (inv - m).abs() > 1e-9 * inv || m < 1.0 {
        return Err(Error::InvalidArgument(format!("H = {h} is not 1/m for an integer m")));
    }
    let m = m as usize;
    if !n.is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!("1/H = {m} does not divide n = {n}")));
    }
    Ok(m)
}

fn scenario_from_flags(a: &SolveArgs) -> Result<Scenario, Error> {
    let re = a.re.ok_or_else(|| Error::InvalidArgument("--re is required".into()))?;
    let method: Method = a.method.parse()?;
    let mode: NudgingMode = a.cda.parse()?;
    let n_h = a.h.map(|h| coarse_count(h, a.n)).transpose()?;
    let mut s = Scenario::new(String::new(), method, re, a.n);
    s.tol = a.tol;
    s.max_iters = a.max_iters;
    s.lid_speed = a.lid_speed;
    s.allow_small_mu = a.allow_small_mu;
    s.include_boundary = a.include_boundary;
    match mode {
        NudgingMode::Off => {
            if n_h.is_some() || a.mu.is_some() {
                return Err(Error::InvalidArgument("--H and --mu need --cda penalty or direct".into()));
            }
        }
        NudgingMode::Direct => {
            let m = n_h.ok_or_else(|| Error::InvalidArgument("--cda direct needs --H".into()))?;
            if a.mu.is_some() {
                return Err(Error::InvalidArgument("--mu only applies to --cda penalty".into()));
            }
            s = s.direct(m);
        }
        NudgingMode::Penalty => {
            let m = n_h.ok_or_else(|| Error::InvalidArgument("--cda penalty needs --H".into()))?;
            let mu = a.mu.ok_or_else(|| Error::InvalidArgument("--cda penalty needs --mu".into()))?;
            s = s.penalty(m, mu);
        }
    }
    if let Some(depth) = a.aa_depth {
        s.anderson = Some(AndersonConfig {
            depth,
            beta: a.aa_beta,
            inner_product: a.aa_inner.parse::<InnerProduct>()?,
        });
        s.anderson.as_ref().unwrap().validate()?;
    }
    s.name = a.name.clone().unwrap_or_else(|| default_name(&s));
    s.validate()?;
    s.config().validate()?;
    Ok(s)
}

fn default_name(s: &Scenario) -> String {
    let mut name = format!("{}-{}-re{}-n{}", s.method, s.nudging, s.re, s.n);
    if let Some(m) = s.n_h {
        name.push_str(&format!("-H{m:03}"));
    }
    if s.nudging == NudgingMode::Penalty {
        name.push_str(&format!("-mu{:e}", s.mu));
    }
    if let Some(aa) = &s.anderson {
        name.push_str(&format!("-aa{}", aa.depth));
    }
    name
}

fn trace_curve(label: String, trace: &IterationTrace) -> Curve {
    Curve {
        label,
        values: trace.errors_h1().unwrap_or_else(|| trace.updates()),
        diverged: trace.status == Status::Diverged,
    }
}

fn cmd_solve(a: SolveArgs) -> Result<u8, Error> {
    let scenario = match &a.from_metadata {
        Some(p) => Scenario::from_metadata(&std::fs::read_to_string(p)?)?,
        None => scenario_from_flags(&a)?,
    };
    let out = &a.output.out;
    let csv = out.join(format!("{}.csv", scenario.name));
    if csv.exists() && !a.output.force {
        return Err(Error::InvalidArgument(format!(
            "{} exists; pass --force to overwrite",
            csv.display()
        )));
    }
    std::fs::create_dir_all(out)?;
    let refs = ReferenceCache::with_dir(out.join("references"));
    let run = bench::run_scenario(&scenario, &refs, false)?;
    std::fs::write(&csv, run.trace.to_csv())?;
    std::fs::write(out.join(format!("{}.meta", scenario.name)), run.metadata())?;
    if a.plot {
        let svg = render_svg(&scenario.name, "H1 error", &[trace_curve(scenario.name.clone(), &run.trace)])?;
        std::fs::write(out.join(format!("{}.svg", scenario.name)), svg)?;
    }
    println!(
        "{}: {} after {} iterations{}",
        scenario.name,
        run.trace.status,
        run.trace.iterations(),
        run.rate.map_or_else(String::new, |f| format!(", fitted rate {:.4}", f.rate))
    );
    if run.trace.mu_below_min {
        println!("warning: mu is below mu_min = nu / (4 H^2)");
    }
    Ok(match run.trace.status {
        Status::Converged => 0,
        Status::MaxIters => 2,
        Status::Diverged => 3,
    })
}

fn guard_dir(dir: &Path, force: bool) -> Result<(), Error> {
    if !force && dir.exists() && std::fs::read_dir(dir)?.next().is_some() {
        return Err(Error::InvalidArgument(format!(
            "{} already holds a report; pass --force to overwrite",
            dir.display()
        )));
    }
    Ok(())
}

fn cmd_suite(a: SuiteArgs) -> Result<u8, Error> {
    let out = &a.output.out;
    let spacing = |default: &[usize]| -> Result<Vec<usize>, Error> {
        if a.h.is_empty() {
            Ok(default.to_vec())
        } else {
            a.h.iter().map(|&h| coarse_count(h, a.n)).collect()
        }
    };
    let res = |default: &[f64]| if a.re.is_empty() { default.to_vec() } else { a.re.clone() };
    let single = |default: f64| -> Result<f64, Error> {
        match a.re.as_slice() {
            [] => Ok(default),
            [r] => Ok(*r),
            _ => Err(Error::InvalidArgument(format!("suite {} takes a single --re", a.name))),
        }
    };
    let known = ["table1", "musweep", "enablement", "newtonbasin", "aa"];
    if !known.contains(&a.name.as_str()) {
        return Err(Error::InvalidArgument(format!(
            "unknown suite '{}' (expected one of {})",
            a.name,
            known.join(", ")
        )));
    }
    guard_dir(out, a.output.force)?;
    std::fs::create_dir_all(out)?;
    let refs = ReferenceCache::with_dir(out.join("references"));
    let opts = SuiteOptions {
        jobs: a.jobs.unwrap_or_else(|| SuiteOptions::default().jobs),
    };
    let report: SuiteReport = match a.name.as_str() {
        "table1" => bench::suite_table1(a.n, single(bench::TABLE1_RE)?, &refs, &opts)?,
        "musweep" => {
            let m = match spacing(&[bench::MUSWEEP_COARSE])?.as_slice() {
                [m] => *m,
                _ => return Err(Error::InvalidArgument("musweep takes a single --H".into())),
            };
            let mu = if a.mu.is_empty() { bench::MUSWEEP_GRID.to_vec() } else { a.mu.clone() };
            bench::suite_mu_sweep(single(bench::TABLE1_RE)?, a.n, m, &mu, &refs, &opts)?
        }
        "enablement" => bench::suite_enablement(
            &res(&bench::ENABLEMENT_RE),
            a.n,
            &spacing(&bench::ENABLEMENT_COARSE)?,
            &refs,
            &opts,
        )?,
        "newtonbasin" => bench::suite_newton_basin(
            &res(&bench::NEWTON_RE),
            a.n,
            &spacing(&bench::NEWTON_COARSE)?,
            &refs,
            &opts,
        )?,
        _ => bench::suite_aa(
            single(bench::AA_RE)?,
            a.n,
            &spacing(&bench::AA_COARSE)?,
            a.aa_depth,
            a.aa_beta,
            &refs,
            &opts,
        )?,
    };
    report.write_to(out)?;
    print!("{}", report.text());
    Ok(if report.passed() { 0 } else { EXIT_ASSERTION })
}

fn cmd_plot(a: PlotArgs) -> Result<(), Error> {
    let columns = cdanse::solvers::TRACE_HEADER.split(',').collect::<Vec<_>>();
    let col = columns
        .iter()
        .position(|c| *c == a.column)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown column '{}'", a.column)))?;
    let mut curves = Vec::new();
    for p in &a.traces {
        let text = std::fs::read_to_string(p)?;
        let records = IterationTrace::records_from_csv(&text)?;
        let values = records
            .iter()
            .map(|r| {
                match col {
                    0 => Some(r.k as f64),
                    1 => Some(r.update_h1),
                    2 => Some(r.residual),
                    3 => r.err_l2,
                    4 => r.err_h1,
                    5 => r.err_star,
                    6 => r.aa_gain,
                    _ => Some(r.wall_ms),
                }
                .unwrap_or(f64::NAN)
            })
            .collect();
        let meta = std::fs::read_to_string(p.with_extension("meta")).unwrap_or_default();
        let label = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        curves.push(Curve {
            label,
            values,
            diverged: meta.lines().any(|l| l.trim() == "status=diverged"),
        });
    }
    let title = a.title.unwrap_or_else(|| curves.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(", "));
    std::fs::write(&a.out, render_svg(&title, &a.column, &curves)?)?;
    Ok(())
}
