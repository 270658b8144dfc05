use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nanonet_core::dimensioning::{self, ApplicationSpec, DimensioningOptions, KRow};
use nanonet_core::energy::{self, EnergySimConfig};
use nanonet_core::geometry::{self, McEstimate, VolumeEstimate, DEFAULT_TOL};
use nanonet_core::scenario::Scenario;
use nanonet_core::simulator::{self, CircuitConfig, PhaseModel, SimConfig};
use nanonet_core::{analyze_with, RegionKind, RegionSpec, TransmitWindow, ValidParams};

mod error;
mod sweep;

use error::CliError;

#[derive(Parser)]
#[command(name = "nanonet", version, about = "Flow-guided nano-network performance model")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Relative tolerance of the volume quadrature.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// QoD storage-chain convention (analyze/sweep default printed,
    /// dimension default inclusive).
    #[arg(long, global = true, value_enum)]
    qod_window: Option<Window>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Window {
    Printed,
    Inclusive,
}

impl From<Window> for TransmitWindow {
    fn from(w: Window) -> Self {
        match w {
            Window::Printed => TransmitWindow::Printed,
            Window::Inclusive => TransmitWindow::Inclusive,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the scenario with every field resolved, in SI units.
    Scenario { scenario: Option<PathBuf> },
    /// Coverage, transmission and collision volumes.
    Volumes {
        scenario: Option<PathBuf>,
        /// Cross-check against the Monte-Carlo oracle.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 2_000_000)]
        samples: u64,
    },
    /// Analytic throughput, delay and QoD.
    Analyze {
        scenario: Option<PathBuf>,
        /// QoD horizon in rounds.
        #[arg(long, default_value_t = 10)]
        m: u64,
    },
    /// Analytic metrics over a parameter grid, one row per point.
    Sweep(sweep::SweepArgs),
    /// Monte-Carlo simulation.
    Simulate {
        scenario: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        /// Write per-frame delays here as CSV.
        #[arg(long)]
        delays: Option<PathBuf>,
    },
    /// Smallest network and best storage duration for an application.
    Dimension {
        /// Scenario with an `application` section.
        scenario: Option<PathBuf>,
        /// Use a built-in application instead (bacterial, viral, sepsis,
        /// heart, restenosis).
        #[arg(long, conflicts_with = "scenario")]
        app: Option<String>,
        /// Write the per-k table here as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = dimensioning::N_CAP)]
        n_cap: u64,
    },
    /// Compare simulation with the analytic model; exit 4 on failure.
    Validate {
        scenario: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 10)]
        m: u64,
    },
    /// Nano-capacitor charge trajectory under duty cycling.
    Energy {
        scenario: Option<PathBuf>,
        /// Active-cycle frequency (default: the network's f).
        #[arg(long)]
        frequency: Option<f64>,
        #[arg(long, default_value_t = 1000.0)]
        duration: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Write the sampled trajectory here as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also search the highest sustainable frequency.
        #[arg(long)]
        sustainable: bool,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 10)]
    replications: u32,
    /// Measured time per replication, after the warm-up (s).
    #[arg(long, default_value_t = 3600.0)]
    duration: f64,
    /// Warm-up (s); default (k + ⌈3/η⌉) rounds.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long, value_enum, default_value = "independent")]
    phase: Phase,
    /// Start nodes with empty memory instead of a steady-state draw.
    #[arg(long)]
    empty_start: bool,
    /// Sensor flow fraction used by the simulated circuit (default: η).
    #[arg(long)]
    sim_eta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phase {
    Independent,
    Synchronized,
}

impl SimArgs {
    fn config(&self, p: &ValidParams, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::for_params(p, seed, self.replications, self.duration);
        if let Some(w) = self.warmup {
            cfg.warmup = w;
            cfg.duration = w + self.duration;
        }
        cfg.phase = match self.phase {
            Phase::Independent => PhaseModel::Independent,
            Phase::Synchronized => PhaseModel::Synchronized,
        };
        cfg.stationary_start = !self.empty_start;
        cfg
    }

    fn circuit(&self, p: &ValidParams) -> Result<CircuitConfig, CliError> {
        let circuit_params = match self.sim_eta {
            Some(eta) => p.with(|q| q.eta = eta)?,
            None => p.clone(),
        };
        Ok(CircuitConfig::default_for(&circuit_params)?)
    }
}

fn load(path: Option<&Path>) -> Result<Scenario, CliError> {
    match path {
        None => Ok(Scenario::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            Ok(Scenario::from_json(&text)?)
        }
    }
}

fn network(s: &Scenario) -> Result<ValidParams, CliError> {
    Ok(s.network_params()?.validate()?)
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

/// One-row CSV of a flat JSON object.
fn emit_flat_csv<T: Serialize>(value: &T) -> Result<(), CliError> {
    let json = serde_json::to_value(value).map_err(|e| CliError::Output(e.to_string()))?;
    let mut cols = Vec::new();
    flatten("", &json, &mut cols);
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(cols.iter().map(|(k, _)| k.as_str()))?;
    w.write_record(cols.iter().map(|(_, v)| v.as_str()))?;
    w.flush()?;
    Ok(())
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(_) => {}
        Value::Null => out.push((prefix.into(), String::new())),
        Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

fn emit<T: Serialize>(format: Option<Format>, value: &T) -> Result<(), CliError> {
    match format.unwrap_or(Format::Json) {
        Format::Json => emit_json(value),
        Format::Csv => emit_flat_csv(value),
    }
}

#[derive(Serialize)]
struct OracleCheck {
    kind: RegionKind,
    quadrature: VolumeEstimate,
    oracle: McEstimate,
    agree: bool,
}

#[derive(Serialize)]
struct VolumesReport {
    coverage: VolumeEstimate,
    transmission: VolumeEstimate,
    collision: VolumeEstimate,
    nested: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Vec<OracleCheck>>,
}

/// Quadrature and oracle agree within max(3σ, 0.5%).
fn oracle_agrees(q: f64, mc: &McEstimate) -> bool {
    (q - mc.value).abs() <= (3.0 * mc.std_error).max(0.005 * q)
}

fn cmd_scenario(path: Option<&Path>) -> Result<(), CliError> {
    let s = load(path)?;
    let mut resolved = Scenario::from_network(&s.network_params()?);
    resolved.name = s.name.clone();
    if s.energy.is_some() {
        resolved = resolved.with_energy(&s.energy_params()?);
    }
    if s.application.is_some() {
        resolved = resolved.with_application(&s.application()?);
    }
    writeln!(io::stdout().lock(), "{}", resolved.to_json())?;
    Ok(())
}

fn cmd_volumes(cli: &Cli, scenario: Option<&Path>, oracle: bool, samples: u64) -> Result<(), CliError> {
    let p = network(&load(scenario)?)?;
    let v = geometry::volumes(&p, cli.tol)?;
    let oracle = if oracle {
        let mut checks = Vec::new();
        for (kind, q) in [
            (RegionKind::Coverage, v.coverage),
            (RegionKind::Transmission, v.transmission),
            (RegionKind::Collision, v.collision),
        ] {
            let spec = RegionSpec::new(kind, p.range, p.vein_diameter, p.shift())?;
            let mc = geometry::mc_volume_oracle(&spec, samples, cli.seed)?;
            checks.push(OracleCheck {
                kind,
                quadrature: q,
                agree: oracle_agrees(q.value, &mc),
                oracle: mc,
            });
        }
        Some(checks)
    } else {
        None
    };
    let disagree = oracle.as_ref().is_some_and(|c| c.iter().any(|c| !c.agree));
    emit(
        cli.format,
        &VolumesReport {
            coverage: v.coverage,
            transmission: v.transmission,
            collision: v.collision,
            nested: v.is_nested(),
            oracle,
        },
    )?;
    if disagree {
        return Err(CliError::Numerical("quadrature and Monte-Carlo oracle disagree".into()));
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, scenario: Option<&Path>, m: u64) -> Result<(), CliError> {
    let p = network(&load(scenario)?)?;
    let v = geometry::volumes(&p, cli.tol)?;
    let window = cli.qod_window.map_or(TransmitWindow::Printed, Into::into);
    emit(cli.format, &analyze_with(&p, &v, m, window)?)
}

fn cmd_simulate(cli: &Cli, scenario: Option<&Path>, args: &SimArgs, delays: Option<&Path>) -> Result<(), CliError> {
    let p = network(&load(scenario)?)?;
    let result = simulator::run(&p, &args.circuit(&p)?, &args.config(&p, cli.seed))?;
    if let Some(path) = delays {
        let file = fs::File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        result.write_delays_csv(io::BufWriter::new(file))?;
    }
    emit(cli.format, &result)
}

fn write_k_table(path: &Path, table: &[KRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "n_min", "attained", "tau_av_s", "th_eff_frames_per_s", "tau_n", "metric"])?;
    for r in table {
        w.write_record([
            r.k.to_string(),
            r.n_min.map_or(String::new(), |n| n.to_string()),
            r.attained.to_string(),
            r.tau_av.to_string(),
            r.th_eff.to_string(),
            r.tau_n.to_string(),
            r.metric.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_dimension(
    cli: &Cli,
    scenario: Option<&Path>,
    app: Option<&str>,
    table: Option<&Path>,
    n_cap: u64,
) -> Result<(), CliError> {
    let s = load(scenario)?;
    let spec = match app {
        Some(name) => ApplicationSpec::reference_applications()
            .into_iter()
            .find(|a| a.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Input(format!("unknown application `{name}`")))?,
        None => s.application()?,
    };
    let base = network(&s)?.with(|q| q.eta = spec.eta)?;
    let v = geometry::volumes(&base, cli.tol)?;
    let opts = DimensioningOptions {
        window: cli.qod_window.map_or(TransmitWindow::Inclusive, Into::into),
        n_cap,
    };
    let result = dimensioning::dimension(&spec, &base, &v, &opts)?;
    if let Some(path) = table {
        write_k_table(path, &result.table)?;
    }
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => emit_json(&result),
        Format::Csv => {
            #[derive(Serialize)]
            struct Row<'a> {
                name: &'a str,
                k_opt: u32,
                n_min: u64,
                throughput: f64,
                tau_av: f64,
                m_target: Option<u64>,
                qod: Option<f64>,
            }
            emit_flat_csv(&Row {
                name: &result.name,
                k_opt: result.k_opt,
                n_min: result.n_min,
                throughput: result.throughput,
                tau_av: result.tau_av,
                m_target: result.m_target,
                qod: result.qod,
            })
        }
    }
}

fn cmd_validate(cli: &Cli, scenario: Option<&Path>, args: &SimArgs, m: u64) -> Result<(), CliError> {
    let p = network(&load(scenario)?)?;
    let v = geometry::volumes(&p, cli.tol)?;
    let window = cli.qod_window.map_or(TransmitWindow::Printed, Into::into);
    let analytic = analyze_with(&p, &v, m, window)?;
    let result = simulator::run(&p, &args.circuit(&p)?, &args.config(&p, cli.seed))?;
    let report = simulator::compare(&analytic, &result);
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => emit_json(&report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["metric", "analytic", "simulated", "half_width", "z", "pass", "note"])?;
            let opt = |x: Option<f64>| x.map_or(String::new(), |x| x.to_string());
            for c in &report.metrics {
                w.write_record([
                    c.metric.clone(),
                    c.analytic.to_string(),
                    opt(c.simulated),
                    opt(c.half_width),
                    opt(c.z),
                    c.pass.map_or(String::new(), |b| b.to_string()),
                    c.note.clone(),
                ])?;
            }
            w.flush()?;
        }
    }
    if !report.passed() {
        return Err(CliError::ValidationFailed);
    }
    Ok(())
}

#[derive(Serialize)]
struct EnergyReport {
    frequency: f64,
    e_max: f64,
    cycle_energy: f64,
    steady_state: f64,
    communication_events: u64,
    skipped_cycles: u64,
    skipped_after_warmup: u64,
    balance_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_sustainable_frequency: Option<f64>,
}

fn cmd_energy(
    cli: &Cli,
    scenario: Option<&Path>,
    frequency: Option<f64>,
    duration: f64,
    dt: f64,
    trace: Option<&Path>,
    sustainable: bool,
) -> Result<(), CliError> {
    let s = load(scenario)?;
    let ep = s.energy_params()?.validate()?;
    let f = match frequency {
        Some(f) => f,
        None => s.network_params()?.frequency,
    };
    let mut cfg = EnergySimConfig::new(&ep, f, duration);
    cfg.dt = dt;
    let traj = energy::simulate_energy(&ep, &cfg)?;
    if let Some(path) = trace {
        let file = fs::File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        traj.write_csv(io::BufWriter::new(file))?;
    }
    emit(
        cli.format,
        &EnergyReport {
            frequency: f,
            e_max: traj.e_max,
            cycle_energy: traj.cycle_energy,
            steady_state: traj.steady_state_estimate,
            communication_events: traj.communication_events.len() as u64,
            skipped_cycles: traj.skipped_cycles,
            skipped_after_warmup: traj.skipped_after_warmup,
            balance_drift: traj.balance_drift(),
            max_sustainable_frequency: sustainable.then(|| energy::max_sustainable_frequency(&ep)),
        },
    )
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(CliError::Input(format!("--tol must be positive (got {})", cli.tol)));
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    match &cli.command {
        Command::Scenario { scenario } => cmd_scenario(scenario.as_deref()),
        Command::Volumes {
            scenario,
            oracle,
            samples,
        } => cmd_volumes(cli, scenario.as_deref(), *oracle, *samples),
        Command::Analyze { scenario, m } => cmd_analyze(cli, scenario.as_deref(), *m),
        Command::Sweep(args) => sweep::run(cli, args),
        Command::Simulate { scenario, sim, delays } => cmd_simulate(cli, scenario.as_deref(), sim, delays.as_deref()),
        Command::Dimension {
            scenario,
            app,
            table,
            n_cap,
        } => cmd_dimension(cli, scenario.as_deref(), app.as_deref(), table.as_deref(), *n_cap),
        Command::Validate { scenario, sim, m } => cmd_validate(cli, scenario.as_deref(), sim, *m),
        Command::Energy {
            scenario,
            frequency,
            duration,
            dt,
            trace,
            sustainable,
        } => cmd_energy(
            cli,
            scenario.as_deref(),
            *frequency,
            *duration,
            *dt,
            trace.as_deref(),
            *sustainable,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::ValidationFailed) {
                eprintln!("error: {e}");
            } else {
                eprintln!("{e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
