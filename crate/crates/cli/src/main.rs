//! `noisemix` command-line driver.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noisemix::coefficients::write_coefficient_dump;
use noisemix::experiment::config::{ConfigFile, IndexOrName, OneOrMany};
use noisemix::experiment::csv::write_metrics;
use noisemix::experiment::oracle::{markov_comparison, write_kernel_table};
use noisemix::experiment::scenario::{metrics_for, simulate};
use noisemix::experiment::sweep::{file_name, run_sweep, Axes, MANIFEST_NAME};
use noisemix::experiment::validate::{validate, Level, ValidateOptions};
use noisemix::experiment::{MetricSeries, ScenarioSpec};
use noisemix::linalg::JacobiOptions;
use noisemix::noise::Scenario;
use noisemix::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "noisemix", version, about = "Two-qubit dynamics under mixed relaxation and dephasing noise")]
struct Cli {
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its metric CSV
    Run(RunArgs),
    /// Run every (gamma_beta, Gamma_alpha, scenario) combination
    Sweep(SweepArgs),
    /// Run the invariant suite
    Validate(ValidateArgs),
    /// Tabulate the correlation kernels
    Kernels(KernelArgs),
    /// Compare scenario C against its collective Lindblad limit
    MarkovCheck(MarkovArgs),
}

/// Parameters shared by the simulation subcommands; flags override the file.
#[derive(Args, Debug, Default, Clone)]
struct SpecArgs {
    /// Key-value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "Gamma_alpha", value_name = "RATE")]
    big_gamma_alpha: Option<f64>,
    #[arg(long = "gamma_alpha", value_name = "RATE")]
    gamma_alpha: Option<f64>,
    #[arg(long = "Gamma_beta", value_name = "RATE")]
    big_gamma_beta: Option<f64>,
    #[arg(long = "gamma_beta", value_name = "RATE")]
    gamma_beta: Option<f64>,
    #[arg(long = "dephasing_markovian", value_name = "BOOL")]
    dephasing_markovian: Option<bool>,
    /// R, D or C
    #[arg(long)]
    scenario: Option<String>,
    /// independent or collective
    #[arg(long = "dephasing_topology")]
    dephasing_topology: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t_max")]
    t_max: Option<f64>,
    /// bell_psi_plus, bell_phi_plus, |ab>, or file:<path>
    #[arg(long = "initial_state")]
    initial_state: Option<String>,
    /// Comma-separated subset of capacity, avg_fidelity
    #[arg(long)]
    metrics: Option<String>,
    /// auto or a Bell index 0..3
    #[arg(long = "m_convention")]
    m_convention: Option<String>,
    #[arg(long = "s1_stride")]
    s1_stride: Option<usize>,
    #[arg(long = "output_dir")]
    output_dir: Option<PathBuf>,
    #[arg(long = "omega_A")]
    omega_a: Option<f64>,
    #[arg(long = "omega_B")]
    omega_b: Option<f64>,
    /// Report the outcome-weighted fidelity sum_m p_m F^m
    #[arg(long = "average-over-m")]
    average_over_m: bool,
    /// Scenario C with the dressed kernel at finite dephasing memory
    #[arg(long = "general-kernel")]
    general_kernel: bool,
    /// closed_form or quadrature
    #[arg(long = "fidelity-method")]
    fidelity_method: Option<String>,
}

impl SpecArgs {
    fn overrides(&self) -> ConfigFile {
        ConfigFile {
            big_gamma_alpha: self.big_gamma_alpha,
            gamma_alpha: self.gamma_alpha,
            big_gamma_beta: self.big_gamma_beta,
            gamma_beta: self.gamma_beta,
            dephasing_markovian: self.dephasing_markovian,
            scenario: self.scenario.clone(),
            dephasing_topology: self.dephasing_topology.clone(),
            dt: self.dt,
            t_max: self.t_max,
            initial_state: self.initial_state.clone(),
            metrics: self.metrics.clone().map(OneOrMany::One),
            m_convention: self.m_convention.clone().map(IndexOrName::Name),
            s1_stride: self.s1_stride,
            output_dir: self.output_dir.clone(),
            omega_a: self.omega_a,
            omega_b: self.omega_b,
            composite_kernel: self.general_kernel.then(|| "general".to_string()),
            average_over_m: self.average_over_m.then_some(true),
            fidelity_method: self.fidelity_method.clone(),
            sweep: None,
        }
    }

    fn load(&self) -> Result<(ConfigFile, ScenarioSpec), Failure> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let merged = file.overlay(self.overrides());
        let spec = merged.resolve()?;
        Ok((merged, spec))
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Metric CSV path ("-" for stdout); default <output_dir>/<standard name>
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write F1..F4 as a binary coefficient dump
    #[arg(long = "dump-coefficients", value_name = "PATH")]
    dump_coefficients: Option<PathBuf>,
    /// Write the density-matrix trajectory as CSV
    #[arg(long = "dump-trajectory", value_name = "PATH")]
    dump_trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// gamma_beta axis, comma-separated
    #[arg(long = "gamma_beta_axis", value_delimiter = ',', num_args = 0..)]
    gamma_beta_axis: Option<Vec<f64>>,
    /// Gamma_alpha axis, comma-separated
    #[arg(long = "Gamma_alpha_axis", value_delimiter = ',', num_args = 0..)]
    big_gamma_alpha_axis: Option<Vec<f64>>,
    /// Scenario axis, comma-separated
    #[arg(long = "scenario_axis", value_delimiter = ',', num_args = 0..)]
    scenario_axis: Option<Vec<String>>,
    /// Maximum concurrent runs
    #[arg(long, short)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// fast or full
    #[arg(long, default_value = "fast")]
    level: String,
    #[arg(long)]
    full: bool,
    /// Base step of the grids
    #[arg(long)]
    dt: Option<f64>,
    /// Eigensolver convergence threshold used by the entropy checks
    #[arg(long = "jacobi-tolerance")]
    jacobi_tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Output CSV (default stdout)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MarkovArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Maximum allowed trace distance
    #[arg(long, default_value_t = 1e-2)]
    threshold: f64,
    /// Per-time trace distances as CSV
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Message and exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Contract(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self { code: EXIT_NUMERICAL, message: format!("io error: {e}") }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let (config, spec) = args.spec.load()?;
    let to_stdout = args.output.as_deref().is_some_and(|p| p.as_os_str() == "-");
    let path = match &args.output {
        Some(p) => p.clone(),
        None => {
            let dir = config.output_dir();
            std::fs::create_dir_all(&dir)?;
            dir.join(file_name(&spec))
        }
    };
    let emit = |series: &MetricSeries| -> Result<(), Failure> {
        if to_stdout {
            let mut w = open_output(None)?;
            noisemix::experiment::csv::write_metrics_to(series, &mut w)?;
            w.flush()?;
        } else {
            write_metrics(series, &path)?;
        }
        Ok(())
    };
    let sim = match simulate(&spec) {
        Ok(sim) => sim,
        Err(e) => {
            if exit_code(&e) == EXIT_NUMERICAL {
                emit(&MetricSeries::empty(&spec, 0))?;
            }
            return Err(e.into());
        }
    };
    if let Some(p) = &args.dump_coefficients {
        match &sim.field {
            Some(field) => write_coefficient_dump(field, p)?,
            None => log::warn!("scenario D has no coefficient field; --dump-coefficients ignored"),
        }
    }
    if let Some(p) = &args.dump_trajectory {
        sim.trajectory.write_csv(p)?;
    }
    match metrics_for(&spec, &sim.trajectory) {
        Ok(series) => {
            emit(&series)?;
            if !to_stdout {
                eprintln!(
                    "wrote {} ({} rows, max trace drift {:.3e}, min eigenvalue {:.3e})",
                    path.display(),
                    series.len(),
                    series.max_trace_deviation(),
                    series.min_eigenvalue()
                );
            }
            Ok(())
        }
        Err(failure) => {
            emit(&failure.partial)?;
            Err(failure.error.into())
        }
    }
}

fn parse_scenarios(items: &[String]) -> Result<Vec<Scenario>, Failure> {
    items.iter().map(|s| s.trim().parse::<Scenario>().map_err(Failure::from)).collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if args.spec.config.is_none() {
        return Err(Failure::usage("sweep needs --config <path>"));
    }
    let (config, base) = args.spec.load()?;
    let file_axes = config.sweep.clone().unwrap_or_default();
    let scenarios = match (&args.scenario_axis, &file_axes.scenario) {
        (Some(v), _) => parse_scenarios(v)?,
        (None, Some(v)) => parse_scenarios(&v.items())?,
        (None, None) => vec![base.scenario()],
    };
    let axes = Axes {
        gamma_beta: args
            .gamma_beta_axis
            .clone()
            .or(file_axes.gamma_beta)
            .unwrap_or_else(|| vec![base.noise.relaxation.inverse_memory]),
        big_gamma_alpha: args
            .big_gamma_alpha_axis
            .clone()
            .or(file_axes.big_gamma_alpha)
            .unwrap_or_else(|| vec![base.noise.dephasing.coupling]),
        scenarios,
    };
    axes.validate()?;
    let jobs = args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        return Err(Failure::usage("--jobs must be >= 1"));
    }
    let dir = config.output_dir();
    let report = run_sweep(&base, &axes, &dir, jobs)?;
    for e in &report.entries {
        match &e.error {
            None => eprintln!("ok     {}", e.file_name),
            Some(err) => eprintln!("failed {}: {err}", e.file_name),
        }
    }
    eprintln!("manifest: {}", dir.join(MANIFEST_NAME).display());
    match report.failures() {
        0 => Ok(()),
        n => Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("{n} of {} sweep runs failed (see manifest)", report.entries.len()),
        }),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let level = if args.full { Level::Full } else { args.level.parse()? };
    let mut opts = ValidateOptions::new(level);
    opts.dt = args.dt;
    if let Some(dt) = args.dt {
        if dt.is_nan() || dt <= 0.0 || (2.0 / dt - (2.0 / dt).round()).abs() > 1e-9 {
            return Err(Failure::usage(format!("--dt must divide 2 evenly, got {dt}")));
        }
    }
    if let Some(tol) = args.jacobi_tolerance {
        opts.jacobi = JacobiOptions { tolerance: tol, ..JacobiOptions::default() };
    }
    let report = validate(&opts);
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VALIDATION, message: format!("{} invariant(s) failed", report.failures().count()) })
    }
}

fn cmd_kernels(args: KernelArgs) -> Result<(), Failure> {
    let (_, spec) = args.spec.load()?;
    let mut w = open_output(args.output.as_deref())?;
    write_kernel_table(&spec.noise, &spec.grid, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_markov(args: MarkovArgs) -> Result<(), Failure> {
    let (_, spec) = args.spec.load()?;
    let cmp = markov_comparison(&spec)?;
    if let Some(p) = &args.output {
        let mut w = open_output(Some(p))?;
        cmp.write_csv_to(&mut w)?;
        w.flush()?;
    }
    let max = cmp.max_distance();
    let pass = max <= args.threshold;
    println!(
        "{} max trace distance {max:.6e} (threshold {:e}, Lindblad rate {:.6})",
        if pass { "PASS" } else { "FAIL" },
        args.threshold,
        cmp.rate
    );
    if pass {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VALIDATION, message: "Markov-limit gap above threshold".into() })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Kernels(a) => cmd_kernels(a),
        Command::MarkovCheck(a) => cmd_markov(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
