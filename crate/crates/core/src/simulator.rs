//! Monte-Carlo simulation of nano-nodes circulating a branched closed loop.
//!
//! Each round a node picks a branch by flow fraction. The sensor branch
//! hands a fresh frame to nodes with empty memory; the router branch sends
//! the node through the router vein at a uniform cross-section position and
//! entry time, where it fires on its own persistent charge phase. Delivery,
//! collisions and delays are decided from positions and times only; none of
//! the analytic probabilities are used.
//!
//! A node's storage never depends on delivery outcomes (frames are kept
//! until they age out), so nodes are simulated one after another and the
//! firings near the router are resolved against each other afterwards.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::AnalyticMetrics;
use crate::params::ValidParams;
use crate::stats::{self, Interval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("circuit configuration: {0}")]
    Circuit(String),
    #[error("simulation configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub name: String,
    pub flow_fraction: f64,
    /// Duration of a round through this branch (s).
    pub transit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub branches: Vec<Branch>,
    pub router_branch: String,
    pub sensor_branch: String,
    /// When false the bio-sensor never hands out frames.
    pub sensor_active: bool,
}

impl CircuitConfig {
    /// Flow fraction of the router vein, `(π D²/4) v T / V_t`: the share of
    /// the circulating volume that passes through its cross-section per
    /// round.
    pub fn router_flow_fraction(params: &ValidParams) -> f64 {
        let area = PI * params.vein_diameter * params.vein_diameter / 4.0;
        area * params.velocity * params.round_time / params.total_volume
    }

    /// One sensor branch carrying η, the router vein, and the rest of the
    /// body lumped into a third branch; every branch takes T.
    pub fn default_for(params: &ValidParams) -> Result<Self, SimError> {
        let router = Self::router_flow_fraction(params);
        let rest = 1.0 - params.eta - router;
        if rest < -1e-12 {
            return Err(SimError::Circuit(format!(
                "sensor ({}) and router ({router:.6}) fractions exceed the total flow",
                params.eta
            )));
        }
        let mut branches = vec![
            Branch {
                name: "sensor".into(),
                flow_fraction: params.eta,
                transit_time: params.round_time,
            },
            Branch {
                name: "router".into(),
                flow_fraction: router,
                transit_time: params.round_time,
            },
        ];
        if rest > 1e-12 {
            branches.push(Branch {
                name: "body".into(),
                flow_fraction: rest,
                transit_time: params.round_time,
            });
        }
        Ok(Self {
            branches,
            router_branch: "router".into(),
            sensor_branch: "sensor".into(),
            sensor_active: true,
        })
    }

    pub fn validate(&self, params: &ValidParams) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Circuit(m));
        if self.branches.is_empty() {
            return bad("no branches".into());
        }
        for b in &self.branches {
            if !(b.flow_fraction > 0.0 && b.flow_fraction <= 1.0) {
                return bad(format!("branch {} flow fraction {} outside (0, 1]", b.name, b.flow_fraction));
            }
            if !(b.transit_time.is_finite() && b.transit_time > 0.0) {
                return bad(format!("branch {} transit time must be > 0", b.name));
            }
        }
        let total: f64 = self.branches.iter().map(|b| b.flow_fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("flow fractions sum to {total}, not 1"));
        }
        let names: HashSet<&str> = self.branches.iter().map(|b| b.name.as_str()).collect();
        if names.len() != self.branches.len() {
            return bad("duplicate branch names".into());
        }
        for (role, name) in [("router", &self.router_branch), ("sensor", &self.sensor_branch)] {
            if !names.contains(name.as_str()) {
                return bad(format!("{role} branch `{name}` not found"));
            }
        }
        if self.router_branch == self.sensor_branch {
            return bad("router and sensor must sit on distinct branches".into());
        }
        let mean: f64 = self.branches.iter().map(|b| b.flow_fraction * b.transit_time).sum();
        if (mean - params.round_time).abs() > 1e-9 * params.round_time {
            return bad(format!(
                "flow-weighted transit time {mean} s differs from the round time {} s",
                params.round_time
            ));
        }
        Ok(())
    }

    fn index_of(&self, name: &str) -> usize {
        self.branches.iter().position(|b| b.name == name).expect("validated")
    }

    fn transit_bounds(&self) -> (f64, f64) {
        let it = self.branches.iter().map(|b| b.transit_time);
        (it.clone().fold(f64::INFINITY, f64::min), it.fold(0.0, f64::max))
    }
}

/// How the charge cycles of different nodes line up in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Each node draws a persistent phase uniformly in `[0, 1/f)`.
    #[default]
    Independent,
    /// All nodes fire at the same instants, as if paced by a shared
    /// heartbeat.
    Synchronized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Total simulated time per replication, warm-up included (s).
    pub duration: f64,
    pub replications: u32,
    /// Initial stretch excluded from every statistic (s).
    pub warmup: f64,
    #[serde(default)]
    pub phase: PhaseModel,
    /// Start every node in a storage state drawn from a long pre-history
    /// instead of with empty memory.
    #[serde(default = "yes")]
    pub stationary_start: bool,
}

fn yes() -> bool {
    true
}

impl SimConfig {
    /// `(k + ⌈3/η⌉)` rounds. Long enough for every frame alive at time 0 to
    /// age out, and for an empty start to fill up when `stationary_start`
    /// is off (large k then needs far longer, see [`burn_in_cycles`]).
    pub fn recommended_warmup(params: &ValidParams) -> f64 {
        (f64::from(params.k) + (3.0 / params.eta).ceil()) * params.round_time
    }

    /// `replications` runs measuring `measured` seconds after the
    /// recommended warm-up.
    pub fn for_params(params: &ValidParams, seed: u64, replications: u32, measured: f64) -> Self {
        let warmup = Self::recommended_warmup(params);
        Self {
            seed,
            duration: warmup + measured,
            replications,
            warmup,
            phase: PhaseModel::Independent,
            stationary_start: true,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.replications < 1 {
            return Err(SimError::Config("replications must be >= 1".into()));
        }
        if !(self.warmup >= 0.0 && self.duration.is_finite() && self.warmup < self.duration) {
            return Err(SimError::Config(format!(
                "warm-up {} s must be shorter than the duration {} s",
                self.warmup, self.duration
            )));
        }
        Ok(())
    }
}

/// Counters and samples of one replication. Frame counters cover the whole
/// run; delivery counters only the measurement window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: u32,
    pub measured_time: f64,
    pub effective_frames: u64,
    pub raw_frames: u64,
    /// Firings in the transmission region lost to an overlapping firing.
    pub collisions: u64,
    /// Firings that started inside the transmission region.
    pub attempts: u64,
    pub frames_loaded: u64,
    pub frames_delivered: u64,
    pub frames_expired: u64,
    pub frames_in_flight: u64,
    pub delays: Vec<f64>,
    /// Times of every successful delivery in the window.
    pub delivery_times: Vec<f64>,
}

impl ReplicationResult {
    /// `loaded = delivered + expired + in flight`, each frame counted once.
    pub fn conserves_frames(&self) -> bool {
        self.frames_loaded == self.frames_delivered + self.frames_expired + self.frames_in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub params: crate::params::NetworkParams,
    pub circuit: CircuitConfig,
    pub config: SimConfig,
    pub effective_frames: u64,
    pub raw_frames: u64,
    pub collisions: u64,
    /// Mean over replications with a 95% t-interval (frames/s).
    pub throughput_eff: Option<Interval>,
    pub throughput_raw: Option<Interval>,
    pub replications: Vec<ReplicationResult>,
    /// Shortest and longest branch transit time (s).
    pub transit_bounds: (f64, f64),
}

impl SimResult {
    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        self.replications.iter().flat_map(|r| r.delays.iter().copied())
    }

    pub fn measured_time(&self) -> f64 {
        self.replications.iter().map(|r| r.measured_time).sum()
    }

    pub fn write_delays_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "replication,delay_s")?;
        for r in &self.replications {
            for d in &r.delays {
                writeln!(out, "{},{}", r.replication, d)?;
            }
        }
        Ok(())
    }
}

struct Firing {
    t: f64,
    node: u32,
    seq: u32,
    in_tx: bool,
    delay: f64,
}

struct Frame {
    seq: u32,
    age: u32,
    received_at: f64,
}

/// Load cycles a node needs before the phase of its storage cycle is
/// uniform to about 0.1%.
///
/// A cycle is `k` rounds holding a frame plus a geometric wait for the
/// sensor branch (visited with probability `q` per round). The phase
/// converges like `|φ(2π/μ)|^c`, with `φ` the wait's characteristic function
/// and `μ` the mean cycle length. Deterministic aging makes this slow when
/// the wait is short compared with `k`.
pub fn burn_in_cycles(k: u32, q: f64) -> u32 {
    if q <= 0.0 {
        return 0;
    }
    let mu = f64::from(k) + (1.0 - q) / q;
    let w = 2.0 * PI / mu;
    let denom = (1.0 + (1.0 - q).powi(2) - 2.0 * (1.0 - q) * w.cos()).sqrt();
    let decay = (q / denom).min(1.0);
    if decay >= 1.0 - 1e-12 {
        return MAX_BURN_IN;
    }
    ((1e-3f64).ln() / decay.ln()).ceil().clamp(1.0, f64::from(MAX_BURN_IN)) as u32
}

const MAX_BURN_IN: u32 = 2000;

/// Storage state at the end of round -1 after `cycles` load cycles that
/// started with empty memory: the age of the held frame, if any.
fn pre_history<R: Rng>(rng: &mut R, k: u32, q: f64, wait: &Geometric, cycles: u32) -> Option<u32> {
    let horizon = u64::from(cycles) * (u64::from(k) + (1.0 / q).ceil() as u64);
    // rounds counted from the start of the pre-history; round `horizon` is -1
    let mut eligible = 0u64;
    let mut last: Option<u64> = None;
    loop {
        let load = eligible.saturating_add(rng.sample(wait));
        if load > horizon {
            break;
        }
        last = Some(load);
        eligible = load + u64::from(k);
    }
    let age = horizon - last? + 1;
    (age <= u64::from(k)).then_some(age as u32)
}

struct Geometry {
    r2: f64,
    radius: f64,
    shift: f64,
    v: f64,
}

fn run_replication(
    params: &ValidParams,
    circuit: &CircuitConfig,
    sim: &SimConfig,
    rep: u32,
) -> ReplicationResult {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(u64::from(rep));

    let router = circuit.index_of(&circuit.router_branch);
    let sensor = circuit.index_of(&circuit.sensor_branch);
    let mut cumulative = Vec::with_capacity(circuit.branches.len());
    let mut acc = 0.0;
    for b in &circuit.branches {
        acc += b.flow_fraction;
        cumulative.push(acc);
    }
    let transit: Vec<f64> = circuit.branches.iter().map(|b| b.transit_time).collect();
    let geo = Geometry {
        r2: params.range * params.range,
        radius: 0.5 * params.vein_diameter,
        shift: params.shift(),
        v: params.velocity,
    };
    let period = 1.0 / params.frequency;
    let k = params.k;

    let q = circuit.branches[sensor].flow_fraction;
    let wait = (sim.stationary_start && circuit.sensor_active && q > 0.0)
        .then(|| Geometric::new(q).expect("flow fraction in (0, 1]"));
    let cycles = burn_in_cycles(k, q);

    let mut firings: Vec<Firing> = Vec::new();
    let mut in_flight: HashSet<(u32, u32)> = HashSet::new();
    let (mut loaded, mut expired_total) = (0u64, 0u64);

    for node in 0..params.n as u32 {
        let phase = match sim.phase {
            PhaseModel::Independent => rng.random::<f64>() * period,
            PhaseModel::Synchronized => 0.0,
        };
        let mut seq = 0u32;
        let mut frame: Option<Frame> = None;
        if let Some(wait) = &wait {
            if let Some(age) = pre_history(&mut rng, k, q, wait, cycles) {
                seq = 1;
                loaded += 1;
                frame = Some(Frame {
                    seq,
                    age,
                    received_at: -f64::from(age) * params.round_time,
                });
            }
        }
        let mut t = 0.0;
        while t < sim.duration {
            let u: f64 = rng.random();
            let b = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
            let dur = transit[b];

            if let Some(f) = frame.as_mut() {
                f.age += 1;
                if f.age > k {
                    expired_total += 1;
                    frame = None;
                }
            }
            if b == sensor {
                if frame.is_none() && circuit.sensor_active {
                    seq += 1;
                    loaded += 1;
                    frame = Some(Frame {
                        seq,
                        age: 1,
                        received_at: t,
                    });
                }
            } else if b == router {
                if let Some(f) = frame.as_ref().filter(|f| f.age >= 2) {
                    cross_router(&mut rng, &geo, t, dur, phase, period, |t_fire, in_tx| {
                        firings.push(Firing {
                            t: t_fire,
                            node,
                            seq: f.seq,
                            in_tx,
                            delay: t + dur - f.received_at,
                        })
                    });
                }
            }
            t += dur;
        }
        if let Some(f) = frame {
            in_flight.insert((node, f.seq));
        }
    }

    firings.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.node.cmp(&b.node)));
    let overlaps = |i: usize| -> bool {
        let (ti, ni) = (firings[i].t, firings[i].node);
        let before = firings[..i]
            .iter()
            .rev()
            .take_while(|f| ti - f.t < params.frame_time)
            .any(|f| f.node != ni);
        let after = firings[i + 1..]
            .iter()
            .take_while(|f| f.t - ti < params.frame_time)
            .any(|f| f.node != ni);
        before || after
    };

    let mut delivered: HashSet<(u32, u32)> = HashSet::new();
    let mut out = ReplicationResult {
        replication: rep,
        measured_time: sim.duration - sim.warmup,
        effective_frames: 0,
        raw_frames: 0,
        collisions: 0,
        attempts: 0,
        frames_loaded: loaded,
        frames_delivered: 0,
        frames_expired: 0,
        frames_in_flight: 0,
        delays: Vec::new(),
        delivery_times: Vec::new(),
    };
    for (i, f) in firings.iter().enumerate() {
        if !f.in_tx {
            continue;
        }
        let measured = f.t >= sim.warmup && f.t < sim.duration;
        if measured {
            out.attempts += 1;
        }
        if overlaps(i) {
            if measured {
                out.collisions += 1;
            }
            continue;
        }
        let first = delivered.insert((f.node, f.seq));
        if measured {
            out.raw_frames += 1;
            out.delivery_times.push(f.t);
            if first {
                out.effective_frames += 1;
                out.delays.push(f.delay);
            }
        }
    }

    let delivered_in_flight = delivered.iter().filter(|key| in_flight.contains(key)).count() as u64;
    let delivered_expired = delivered.len() as u64 - delivered_in_flight;
    out.frames_delivered = delivered.len() as u64;
    out.frames_expired = expired_total - delivered_expired;
    out.frames_in_flight = in_flight.len() as u64 - delivered_in_flight;
    out
}

/// Samples one passage through the router vein during the round starting
/// at `start`, reporting every firing whose frame could reach the router.
fn cross_router(
    rng: &mut ChaCha8Rng,
    geo: &Geometry,
    start: f64,
    dur: f64,
    phase: f64,
    period: f64,
    mut emit: impl FnMut(f64, bool),
) {
    let t_c = start + rng.random::<f64>() * dur;
    let rad = geo.radius * rng.random::<f64>().sqrt();
    let ang = 2.0 * PI * rng.random::<f64>();
    let x = rad * ang.cos();
    let y = -geo.radius + rad * ang.sin();
    let rho2 = x * x + y * y;
    if rho2 >= geo.r2 {
        return;
    }
    let h = (geo.r2 - rho2).sqrt();
    // A frame started at height z spans [z, z + shift]; it can disturb the
    // router while any part is inside the sphere.
    let first = t_c + (-h - geo.shift) / geo.v;
    let last = t_c + h / geo.v;
    let mut j = ((first - phase) / period).ceil();
    loop {
        let t_fire = phase + j * period;
        if t_fire > last {
            break;
        }
        let z = geo.v * (t_fire - t_c);
        let in_tx = z >= -h && z + geo.shift <= h;
        emit(t_fire, in_tx);
        j += 1.0;
    }
}

/// Runs every replication (in parallel) and aggregates them in order.
pub fn run(params: &ValidParams, circuit: &CircuitConfig, sim: &SimConfig) -> Result<SimResult, SimError> {
    circuit.validate(params)?;
    sim.validate()?;
    if params.n > u64::from(u32::MAX) {
        return Err(SimError::Config(format!("n = {} too large to simulate", params.n)));
    }
    let reps: Vec<ReplicationResult> = (0..sim.replications)
        .into_par_iter()
        .map(|rep| run_replication(params, circuit, sim, rep))
        .collect();

    let rate = |f: fn(&ReplicationResult) -> u64| -> Vec<f64> {
        reps.iter().map(|r| f(r) as f64 / r.measured_time).collect()
    };
    let eff = rate(|r| r.effective_frames);
    let raw = rate(|r| r.raw_frames);
    Ok(SimResult {
        params: params.get().clone(),
        circuit: circuit.clone(),
        config: sim.clone(),
        effective_frames: reps.iter().map(|r| r.effective_frames).sum(),
        raw_frames: reps.iter().map(|r| r.raw_frames).sum(),
        collisions: reps.iter().map(|r| r.collisions).sum(),
        throughput_eff: stats::t_interval(&eff, 0.95),
        throughput_raw: stats::t_interval(&raw, 0.95),
        replications: reps,
        transit_bounds: circuit.transit_bounds(),
    })
}

/// Minimum number of observation windows for an empirical QoD.
pub const MIN_QOD_WINDOWS: u64 = 30;

/// Fraction of consecutive `m`-round windows (after warm-up, all
/// replications pooled) holding at least one successful delivery, with a
/// Wilson 95% interval.
pub fn empirical_qod(result: &SimResult, m: u64) -> Result<Interval, SimError> {
    if m == 0 {
        return Err(SimError::Config("m must be >= 1".into()));
    }
    let span = m as f64 * result.params.round_time;
    let (mut windows, mut hits) = (0u64, 0u64);
    for rep in &result.replications {
        let mut times = rep.delivery_times.clone();
        times.sort_by(f64::total_cmp);
        let mut origin = result.config.warmup;
        let mut idx = 0;
        while origin + span <= result.config.duration + 1e-9 {
            while idx < times.len() && times[idx] < origin {
                idx += 1;
            }
            windows += 1;
            if idx < times.len() && times[idx] < origin + span {
                hits += 1;
            }
            origin += span;
        }
    }
    if windows < MIN_QOD_WINDOWS {
        return Err(SimError::InsufficientData(format!(
            "{windows} windows of {m} rounds; at least {MIN_QOD_WINDOWS} needed"
        )));
    }
    Ok(stats::wilson(hits, windows, 0.95).expect("windows > 0"))
}

/// Agreement of one metric between the model and the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub analytic: f64,
    pub simulated: Option<f64>,
    /// Half-width of the simulation interval used for the comparison.
    pub half_width: Option<f64>,
    /// `(simulated − analytic) / half_width`.
    pub z: Option<f64>,
    /// `None` when not judged: too little data, or a metric reported for
    /// information only.
    pub pass: Option<bool>,
    pub note: String,
}

/// Relative slack granted when an interval collapses to a point.
const DEGENERATE_REL: f64 = 1e-9;

/// Judges one metric at `limit` half-widths.
pub fn compare_value(metric: &str, analytic: f64, simulated: f64, half_width: f64, limit: f64) -> MetricComparison {
    let diff = simulated - analytic;
    let (z, pass) = if half_width > 0.0 {
        let z = diff / half_width;
        (z, z.abs() <= limit)
    } else {
        let ok = diff.abs() <= DEGENERATE_REL * analytic.abs().max(f64::MIN_POSITIVE);
        (if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY }, ok)
    };
    MetricComparison {
        metric: metric.into(),
        analytic,
        simulated: Some(simulated),
        half_width: Some(half_width),
        z: Some(z),
        pass: Some(pass),
        note: String::new(),
    }
}

/// Half-width toward `target` of the exact Poisson interval on a pooled
/// count, expressed as a rate.
fn poisson_half_width(count: u64, exposure: f64, target: f64) -> f64 {
    let ci = stats::garwood(count, 0.95);
    let est = count as f64 / exposure;
    if target >= est {
        ci.upper / exposure - est
    } else {
        est - ci.lower / exposure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Pass limit in half-widths.
    pub limit: f64,
    pub metrics: Vec<MetricComparison>,
}

impl ComparisonReport {
    /// All judged metrics passed (undecidable ones are ignored).
    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass != Some(false))
    }
}

/// Compares model and simulation for effective throughput, average delay
/// and QoD over `analytic.m` rounds, each within 3 half-widths of the
/// simulation's 95% interval. Raw throughput is reported but not judged.
///
/// Throughput intervals are the wider of the replication t-interval and
/// the exact Poisson interval on the pooled count, so that runs with very
/// few deliveries are still judged. The delay interval is a t-interval
/// over delivered frames.
pub fn compare(analytic: &AnalyticMetrics, sim: &SimResult) -> ComparisonReport {
    let limit = 3.0;
    let exposure = sim.measured_time();
    let mut metrics = Vec::new();

    for (name, target, ci, count) in [
        ("th_eff", analytic.th_eff, &sim.throughput_eff, sim.effective_frames),
        ("th_raw", analytic.th_raw, &sim.throughput_raw, sim.raw_frames),
    ] {
        let pooled = count as f64 / exposure;
        let t_hw = ci.map_or(0.0, |c| c.half_width());
        let hw = t_hw.max(poisson_half_width(count, exposure, target));
        let mut m = compare_value(name, target, pooled, hw, limit);
        m.note = format!("{count} frames over {exposure} s");
        if name == "th_raw" {
            // The model lets a frame go out in the round it is stored, the
            // simulator only from its second round, so raw counts run low
            // by up to a factor k/(k-1).
            m.pass = None;
            m.note.push_str("; informational");
        }
        metrics.push(m);
    }

    let delays: Vec<f64> = sim.delays().collect();
    match stats::t_interval(&delays, 0.95) {
        Some(ci) => {
            let mut m = compare_value("tau_av", analytic.tau_av, ci.estimate, ci.half_width(), limit);
            m.note = format!("{} delivered frames", delays.len());
            metrics.push(m);
        }
        None => metrics.push(MetricComparison {
            metric: "tau_av".into(),
            analytic: analytic.tau_av,
            simulated: delays.first().copied(),
            half_width: None,
            z: None,
            pass: None,
            note: format!("insufficient data: {} delivered frames", delays.len()),
        }),
    }

    let name = format!("qod_m{}", analytic.m);
    match empirical_qod(sim, analytic.m) {
        Ok(ci) => {
            // Wilson intervals are asymmetric; use the side facing the model.
            let hw = if analytic.qod >= ci.estimate {
                ci.upper - ci.estimate
            } else {
                ci.estimate - ci.lower
            };
            metrics.push(compare_value(&name, analytic.qod, ci.estimate, hw, limit));
        }
        Err(e) => metrics.push(MetricComparison {
            metric: name,
            analytic: analytic.qod,
            simulated: None,
            half_width: None,
            z: None,
            pass: None,
            note: e.to_string(),
        }),
    }

    ComparisonReport { limit, metrics }
}
