use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qprop::basinhopper::{basin_hop, scaling_trials, DurrHoyerParams, ScalingReport};
use qprop::derivatives::{estimate_derivative, BoxMode, DerivativePlan, DerivativeTensor, Uncomputation};
use qprop::gradient::{
    energy_bits_for, estimate_gradient_with, phase_of, plan_for_order, GradientEstimate, PrecisionPlan,
    Readout, RunOptions,
};
use qprop::optimize::{minimize, quantum_derivative_plan, Method, OptimizationTrace, OptimizerConfig, QuantumSettings};
use qprop::oracles::{EnergyOracle, OracleSpec, PerturbationDomain};
use qprop::report::{default_table_oracle, table1_report};
use qprop::{BasinHopReport, Error};

#[derive(Parser)]
#[command(name = "qprop", version, about = "Simulated quantum derivative estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report files; reports go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand, Clone, PartialEq, Eq, Debug)]
enum Command {
    /// One-query gradient estimate.
    Gradient,
    /// Two-query Hessian estimate.
    Hessian,
    /// Derivative tensor of the configured order.
    Derivative,
    /// Newton minimization.
    Newton,
    /// One-dimensional Householder minimization.
    Householder,
    /// Multistart basin hopping with quantum minimum selection.
    Basinhop,
    /// Measured query counts per derivative order.
    Table1 {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
        orders: Vec<usize>,
        /// Output bits per register for the quantum runs.
        #[arg(long, default_value_t = 2)]
        n: u32,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gradient => "gradient",
            Command::Hessian => "hessian",
            Command::Derivative => "derivative",
            Command::Newton => "newton",
            Command::Householder => "householder",
            Command::Basinhop => "basinhop",
            Command::Table1 { .. } => "table1",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    /// Must match the subcommand when given.
    command: Option<String>,
    oracle: Option<OracleSpec>,
    domain: Option<DomainSpec>,
    plan: Option<PlanSpec>,
    order: Option<usize>,
    seed: Option<u64>,
    /// Sample the register readout instead of reporting the argmax.
    sample: Option<bool>,
    start: Option<Vec<f64>>,
    optimizer: Option<OptimizerConfig>,
    basinhop: Option<BasinhopSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSpec {
    center: Vec<f64>,
    h: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSpec {
    n: u32,
    #[serde(default = "default_theta")]
    theta: f64,
    /// Sampling width of the gradient run.
    h: Option<f64>,
    /// Overrides `m` of the gradient run.
    m: Option<f64>,
    energy_bits: Option<u32>,
    /// Sampling width of every level, innermost first.
    widths: Option<Vec<f64>>,
    #[serde(default = "default_mode")]
    mode: BoxMode,
    #[serde(default = "default_uncomputation")]
    uncomputation: Uncomputation,
}

fn default_theta() -> f64 {
    PI / 8.0
}

fn default_mode() -> BoxMode {
    BoxMode::Idealized
}

fn default_uncomputation() -> Uncomputation {
    Uncomputation::Reverse
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasinhopSpec {
    starts: usize,
    #[serde(default)]
    durr_hoyer: DurrHoyerParams,
    #[serde(default = "default_match_tolerance")]
    match_tolerance: f64,
    scaling: Option<ScalingSpec>,
}

fn default_match_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalingSpec {
    sizes: Vec<usize>,
    trials: usize,
}

/// A report: JSON body plus an optional CSV rendering.
struct Output {
    json: String,
    csv: Option<String>,
}

fn load_config(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })
}

fn required<T>(value: Option<T>, what: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Config(format!("missing `{what}` section")))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_of(write: impl FnOnce(&mut Vec<u8>) -> qprop::Result<()>) -> CliResult<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CliError::Runtime(e.to_string()))
}

fn gradient_plan(spec: &PlanSpec, oracle: &EnergyOracle) -> CliResult<PrecisionPlan> {
    let h = required(spec.h, "plan.h")?;
    let mut plan = match spec.m {
        Some(m) => PrecisionPlan::new(spec.n, m, h, spec.theta, energy_bits_for(spec.n, spec.theta))?,
        None => plan_for_order(1, spec.n, spec.theta, oracle, h)?,
    };
    if let Some(bits) = spec.energy_bits {
        plan = PrecisionPlan::new(plan.n, plan.m, plan.h, plan.theta, bits)?;
    }
    Ok(plan)
}

fn derivative_plan(spec: &PlanSpec, oracle: &EnergyOracle, order: usize) -> CliResult<DerivativePlan> {
    let mut plan = match &spec.widths {
        Some(widths) => DerivativePlan::from_bounds(oracle, order, spec.n, spec.theta, widths, spec.mode)?,
        None => {
            let settings = QuantumSettings {
                n: spec.n,
                theta: spec.theta,
                mode: spec.mode,
                ..QuantumSettings::default()
            };
            quantum_derivative_plan(oracle, order, &settings)?
        }
    };
    plan.uncomputation = spec.uncomputation;
    Ok(plan)
}

#[derive(Serialize)]
struct GradientReport<'a> {
    command: &'static str,
    oracle: &'a str,
    queries: u64,
    decoded: &'a [f64],
    phase: Option<f64>,
    estimate: &'a GradientEstimate,
}

fn run_gradient(config: &ExperimentConfig, seed: Option<u64>) -> CliResult<Output> {
    let oracle = required(config.oracle.as_ref(), "oracle")?.build()?;
    let spec = required(config.plan.as_ref(), "plan")?;
    let plan = gradient_plan(spec, &oracle)?;
    let domain_spec = required(config.domain.as_ref(), "domain")?;
    let domain = PerturbationDomain::new(domain_spec.center.clone(), domain_spec.h.unwrap_or(plan.h))?;
    let readout = if config.sample.unwrap_or(false) {
        Readout::Sample { seed: seed.unwrap_or(0) }
    } else {
        Readout::Argmax
    };
    let run = estimate_gradient_with(&oracle, &domain, &plan, RunOptions { readout, ..RunOptions::default() })?;
    let phase = phase_of(&run).ok();
    let est = &run.estimate;
    let json = to_json(&GradientReport {
        command: "gradient",
        oracle: oracle.name(),
        queries: oracle.calls(),
        decoded: &est.decoded,
        phase,
        estimate: est,
    })?;
    let mut csv = String::from("register,raw,decoded,success_probability\n");
    for (i, ((raw, value), p)) in est.raw.iter().zip(&est.decoded).zip(&est.register_success).enumerate() {
        csv.push_str(&format!("{i},{raw},{value},{p}\n"));
    }
    Ok(Output { json, csv: Some(csv) })
}

#[derive(Serialize)]
struct DerivativeReport<'a> {
    command: &'static str,
    oracle: &'a str,
    order: usize,
    queries: u64,
    analytic: Vec<f64>,
    estimate: &'a DerivativeTensor,
}

fn run_derivative(config: &ExperimentConfig, command: &'static str, order: usize) -> CliResult<Output> {
    let oracle = required(config.oracle.as_ref(), "oracle")?.build()?;
    let spec = required(config.plan.as_ref(), "plan")?;
    let plan = derivative_plan(spec, &oracle, order)?;
    let domain_spec = required(config.domain.as_ref(), "domain")?;
    let h = domain_spec.h.unwrap_or(plan.levels[order - 1].h);
    let domain = PerturbationDomain::new(domain_spec.center.clone(), h)?;
    let estimate = estimate_derivative(&oracle, &domain, order, &plan)?;
    let analytic = oracle.analytic_derivative(order, &domain.center)?.data;
    let json = to_json(&DerivativeReport {
        command,
        oracle: oracle.name(),
        order,
        queries: oracle.calls(),
        analytic: analytic.clone(),
        estimate: &estimate,
    })?;
    let tensor = estimate.tensor();
    let mut csv = String::from("index,estimate,analytic,raw\n");
    for (flat, value) in tensor.data.iter().enumerate() {
        let index: Vec<String> = tensor.unflat(flat).iter().map(usize::to_string).collect();
        csv.push_str(&format!("{},{value},{},{}\n", index.join("-"), analytic[flat], estimate.raw[flat]));
    }
    Ok(Output { json, csv: Some(csv) })
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    command: &'static str,
    oracle: &'a str,
    converged: bool,
    iterations: usize,
    total_queries: u64,
    final_point: &'a [f64],
    final_energy: f64,
    trace: &'a OptimizationTrace,
}

fn run_optimize(config: &ExperimentConfig, command: &Command) -> CliResult<Output> {
    let oracle = required(config.oracle.as_ref(), "oracle")?.build()?;
    let start = required(config.start.as_ref(), "start")?;
    let mut opt = config.optimizer.clone().unwrap_or_default();
    match (command, opt.method) {
        (Command::Householder, Method::Householder { .. }) | (Command::Newton, _) => {}
        (Command::Householder, _) => opt.method = Method::Householder { order: 2 },
        _ => {}
    }
    if *command == Command::Newton && matches!(opt.method, Method::Householder { .. }) {
        return Err(CliError::Config("newton command with a Householder method".into()));
    }
    let trace = minimize(&oracle, start, &opt)?;
    let json = to_json(&OptimizeReport {
        command: command.name(),
        oracle: oracle.name(),
        converged: trace.converged,
        iterations: trace.iterations(),
        total_queries: trace.total_queries,
        final_point: trace.final_point(),
        final_energy: trace.final_energy(),
        trace: &trace,
    })?;
    let csv = csv_of(|buf| trace.write_csv(buf))?;
    Ok(Output { json, csv: Some(csv) })
}

#[derive(Serialize)]
struct BasinhopOutput<'a> {
    command: &'static str,
    oracle: &'a str,
    seed: u64,
    report: &'a BasinHopReport,
    scaling: Option<&'a ScalingReport>,
}

fn run_basinhop(config: &ExperimentConfig, seed: u64) -> CliResult<Output> {
    let oracle = required(config.oracle.as_ref(), "oracle")?.build()?;
    let spec = required(config.basinhop.as_ref(), "basinhop")?;
    let mut local = config.optimizer.clone().unwrap_or_default();
    local.adaptive_trust = true;
    let report = basin_hop(&oracle, spec.starts, seed, &local, &spec.durr_hoyer, spec.match_tolerance)?;
    let scaling = match &spec.scaling {
        Some(s) => Some(scaling_trials(&s.sizes, s.trials, seed, &spec.durr_hoyer)?),
        None => None,
    };
    let json = to_json(&BasinhopOutput {
        command: "basinhop",
        oracle: oracle.name(),
        seed,
        report: &report,
        scaling: scaling.as_ref(),
    })?;
    let mut csv = csv_of(|buf| report.database.write_csv(buf))?;
    if let Some(s) = &scaling {
        csv.push('\n');
        csv.push_str(&csv_of(|buf| s.write_csv(buf))?);
    }
    Ok(Output { json, csv: Some(csv) })
}

fn run_table1(config: &ExperimentConfig, d: usize, orders: &[usize], n: u32) -> CliResult<Output> {
    let oracle = match &config.oracle {
        Some(spec) => spec.build()?,
        None => default_table_oracle(d)?,
    };
    if oracle.dim() != d && config.oracle.is_some() {
        return Err(CliError::Config(format!("--d {d} but the oracle has dimension {}", oracle.dim())));
    }
    let table = table1_report(&oracle, orders, n)?;
    let json = to_json(&table)?;
    let csv = csv_of(|buf| table.write_csv(buf))?;
    Ok(Output { json, csv: Some(csv) })
}

fn execute(cli: &Cli) -> CliResult<Output> {
    let config = load_config(cli.config.as_deref())?;
    let name = cli.command.name();
    if let Some(c) = &config.command {
        if c != name {
            return Err(CliError::Config(format!("config is for `{c}`, command is `{name}`")));
        }
    }
    let seed = cli.seed.or(config.seed);
    match &cli.command {
        Command::Gradient => run_gradient(&config, seed),
        Command::Hessian => run_derivative(&config, "hessian", 2),
        Command::Derivative => {
            let order = required(config.order, "order")?;
            if order == 0 {
                return Err(CliError::Config("order must be at least 1".into()));
            }
            run_derivative(&config, "derivative", order)
        }
        Command::Newton | Command::Householder => run_optimize(&config, &cli.command),
        Command::Basinhop => run_basinhop(&config, seed.unwrap_or(0)),
        Command::Table1 { d, orders, n } => run_table1(&config, *d, orders, *n),
    }
}

fn emit(cli: &Cli, output: &Output) -> CliResult<()> {
    let name = cli.command.name();
    let csv = || {
        output
            .csv
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`{name}` has no CSV form")))
    };
    match &cli.out {
        None => match cli.format {
            Format::Json => print!("{}", output.json),
            Format::Csv => print!("{}", csv()?),
        },
        Some(dir) => {
            fs::create_dir_all(dir)?;
            if cli.format == Format::Json {
                fs::write(dir.join(format!("{name}.json")), &output.json)?;
            }
            if let Some(text) = &output.csv {
                fs::write(dir.join(format!("{name}.csv")), text)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli).and_then(|out| emit(&cli, &out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qprop: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
