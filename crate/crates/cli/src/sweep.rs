//! Parameter sweeps: analytic metrics over a one-dimensional grid,
//! optionally repeated for each value of a second parameter.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::Args;
use serde_json::{Map, Value};

use nanonet_core::geometry;
use nanonet_core::markov::{self, LinkModel, TransmitWindow};
use nanonet_core::scenario::Scenario;
use nanonet_core::units::si_convert;
use nanonet_core::{NetworkParams, ValidParams};

use crate::error::CliError;
use crate::{load, Cli, Format};

pub const AXES: &[&str] = &["n", "T", "V_t", "D", "r", "v", "t_f", "f", "eta", "k"];

pub const METRICS: &[&str] = &[
    "th_two_round",
    "th_raw",
    "th_eff",
    "qod",
    "tau_av",
    "p_tx",
    "p_cx",
    "p_frame",
    "p_s",
    "p_s_rnd",
    "v_cv",
    "v_tx",
    "v_cx",
];

#[derive(Args)]
pub struct SweepArgs {
    pub scenario: Option<PathBuf>,
    /// Swept parameter (n, T, V_t, D, r, v, t_f, f, eta, k).
    #[arg(long)]
    pub axis: String,
    /// Explicit grid, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with_all = ["log", "lin"])]
    pub values: Option<Vec<f64>>,
    /// Log-spaced grid `start,stop,points`.
    #[arg(long, value_delimiter = ',', conflicts_with = "lin")]
    pub log: Option<Vec<f64>>,
    /// Linearly spaced grid `start,stop,points`.
    #[arg(long, value_delimiter = ',')]
    pub lin: Option<Vec<f64>>,
    /// Unit of the grid values (default SI).
    #[arg(long, default_value = "")]
    pub unit: String,
    /// Repeat the sweep for each value of a second parameter, `k=2,10,100`.
    #[arg(long)]
    pub by: Option<String>,
    /// Columns to compute, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub metrics: Vec<String>,
    /// QoD horizon in rounds.
    #[arg(long, default_value_t = 10)]
    pub m: u64,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Grid in SI units; nonempty and strictly monotone.
pub fn grid(args: &SweepArgs) -> Result<Vec<f64>, CliError> {
    let range = |v: &[f64]| -> Result<(f64, f64, usize), CliError> {
        if v.len() != 3 {
            return Err(CliError::Input(format!("range grids take start,stop,points (got {} values)", v.len())));
        }
        let points = v[2];
        if !(points >= 1.0 && points.fract() == 0.0) {
            return Err(CliError::Input(format!("grid point count must be a positive integer (got {points})")));
        }
        Ok((v[0], v[1], points as usize))
    };
    let integer = matches!(args.axis.as_str(), "n" | "k");
    let mut raw: Vec<f64> = if let Some(v) = &args.values {
        v.clone()
    } else if let Some(v) = &args.log {
        let (a, b, n) = range(v)?;
        if !(a > 0.0 && b > 0.0) {
            return Err(CliError::Input("log grid bounds must be positive".into()));
        }
        if n == 1 {
            vec![a]
        } else {
            let (la, lb) = (a.log10(), b.log10());
            (0..n)
                .map(|i| 10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64))
                .collect()
        }
    } else if let Some(v) = &args.lin {
        let (a, b, n) = range(v)?;
        if n == 1 {
            vec![a]
        } else {
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        }
    } else {
        return Err(CliError::Input("one of --values, --log, --lin is required".into()));
    };
    if integer && args.values.is_none() {
        // generated grids snap to whole nodes or rounds
        raw.iter_mut().for_each(|x| *x = x.round());
        raw.dedup();
    }
    let si: Vec<f64> = raw
        .iter()
        .map(|&x| si_convert(x, &args.unit))
        .collect::<Result<_, _>>()?;
    check_monotone(&si)?;
    Ok(si)
}

fn check_monotone(g: &[f64]) -> Result<(), CliError> {
    if g.is_empty() {
        return Err(CliError::Input("empty grid".into()));
    }
    let up = g.windows(2).all(|w| w[0] < w[1]);
    let down = g.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(CliError::Input("grid must be strictly monotone".into()));
    }
    Ok(())
}

fn check_axis(name: &str) -> Result<(), CliError> {
    if AXES.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Input(format!("unknown parameter `{name}`; expected one of {}", AXES.join(", "))))
    }
}

fn set(p: &mut NetworkParams, axis: &str, x: f64) -> Result<(), CliError> {
    let count = |x: f64| -> Result<f64, CliError> {
        if x >= 0.0 && x.fract() == 0.0 {
            Ok(x)
        } else {
            Err(CliError::Input(format!("`{axis}` must be an integer (got {x})")))
        }
    };
    match axis {
        "n" => p.n = count(x)? as u64,
        "k" => p.k = count(x)?.min(f64::from(u32::MAX)) as u32,
        "T" => p.round_time = x,
        "V_t" => p.total_volume = x,
        "D" => p.vein_diameter = x,
        "r" => p.range = x,
        "v" => p.velocity = x,
        "t_f" => p.frame_time = x,
        "f" => p.frequency = x,
        "eta" => p.eta = x,
        _ => unreachable!("axis checked"),
    }
    Ok(())
}

/// Metric values at one point; `None` where undefined (no delivery).
fn point(p: &ValidParams, metrics: &[String], m: u64, tol: f64, window: TransmitWindow) -> Result<Vec<Option<f64>>, CliError> {
    let v = geometry::volumes(p, tol)?;
    let link = LinkModel::new(p, &v)?;
    let probs = markov::link_probabilities_for(&link, p.eta, p.k, p.n);
    let tau = markov::delay_for(p.eta, probs.p_s_rnd, p.k, p.round_time).ok().map(|(t, _)| t);
    metrics
        .iter()
        .map(|name| {
            Ok(match name.as_str() {
                "th_two_round" => Some(markov::two_round_throughput(p, &v)?),
                "th_raw" => Some(markov::raw_throughput_for(&link, p.eta, p.k, p.n)),
                "th_eff" => Some(markov::effective_throughput_for(&link, p.eta, p.k, p.n)),
                "qod" => Some(markov::qod_for(&link, p.eta, p.k, p.n, m, window)),
                "tau_av" => tau,
                "p_tx" => Some(probs.p_tx),
                "p_cx" => Some(probs.p_cx),
                "p_frame" => Some(probs.p_frame),
                "p_s" => Some(probs.p_s),
                "p_s_rnd" => Some(probs.p_s_rnd),
                "v_cv" => Some(v.coverage.value),
                "v_tx" => Some(v.transmission.value),
                "v_cx" => Some(v.collision.value),
                _ => unreachable!("metric checked"),
            })
        })
        .collect()
}

fn parse_by(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--by expects name=v1,v2,... (got `{spec}`)")))?;
    check_axis(name)?;
    let values = values
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::Input(format!("--by value `{s}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_monotone(&values)?;
    Ok((name.to_string(), values))
}

fn fmt(x: Option<f64>) -> String {
    x.map_or(String::new(), |x| x.to_string())
}

pub fn run(cli: &Cli, args: &SweepArgs) -> Result<(), CliError> {
    let metrics: Vec<String> = args.metrics.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if metrics.is_empty() {
        return Err(CliError::Input("no metrics requested".into()));
    }
    if let Some(bad) = metrics.iter().find(|m| !METRICS.contains(&m.as_str())) {
        return Err(CliError::Input(format!("unknown metric `{bad}`; expected one of {}", METRICS.join(", "))));
    }
    check_axis(&args.axis)?;
    let grid = grid(args)?;
    let by = args.by.as_deref().map(parse_by).transpose()?;
    if by.as_ref().is_some_and(|(name, _)| *name == args.axis) {
        return Err(CliError::Input("--by must differ from --axis".into()));
    }
    let scenario: Scenario = load(args.scenario.as_deref())?;
    let base = scenario.network_params()?;
    base.validate()?;
    let window = cli.qod_window.map_or(TransmitWindow::Printed, Into::into);

    let series: Vec<Option<f64>> = match &by {
        Some((_, values)) => values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut rows: Vec<(Option<f64>, f64, Vec<Option<f64>>)> = Vec::new();
    for s in &series {
        for &x in &grid {
            let mut p = base.clone();
            if let (Some((name, _)), Some(sv)) = (&by, s) {
                set(&mut p, name, *sv)?;
            }
            set(&mut p, &args.axis, x)?;
            let values = match p.validate() {
                Ok(valid) => point(&valid, &metrics, args.m, cli.tol, window)?,
                Err(e) => {
                    eprintln!("warning: {} = {x}: {e}; row left empty", args.axis);
                    vec![None; metrics.len()]
                }
            };
            rows.push((*s, x, values));
        }
    }

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(io::BufWriter::new(
            fs::File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            // Fixed parameters as comment lines, SI units.
            let fixed = serde_json::to_value(&base).map_err(|e| CliError::Output(e.to_string()))?;
            if let Value::Object(map) = fixed {
                for (k, v) in map {
                    writeln!(out, "# {k} = {v}")?;
                }
            }
            writeln!(out, "# swept = {} (SI)", args.axis)?;
            writeln!(out, "# qod_m = {}", args.m)?;
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
            let mut header = Vec::new();
            if let Some((name, _)) = &by {
                header.push(name.clone());
            }
            header.push(args.axis.clone());
            header.extend(metrics.iter().cloned());
            w.write_record(&header)?;
            for (s, x, values) in &rows {
                let mut rec = Vec::new();
                if by.is_some() {
                    rec.push(fmt(*s));
                }
                rec.push(x.to_string());
                rec.extend(values.iter().map(|v| fmt(*v)));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let array: Vec<Value> = rows
                .iter()
                .map(|(s, x, values)| {
                    let mut obj = Map::new();
                    if let (Some((name, _)), Some(s)) = (&by, s) {
                        obj.insert(name.clone(), Value::from(*s));
                    }
                    obj.insert(args.axis.clone(), Value::from(*x));
                    for (m, v) in metrics.iter().zip(values) {
                        obj.insert(m.clone(), v.map_or(Value::Null, Value::from));
                    }
                    Value::Object(obj)
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &array).map_err(|e| CliError::Output(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}
