//! Nano-node energy balance: consumption per active cycle, the
//! piezoelectric harvesting rate, and an explicit-Euler charge/discharge
//! simulation of the nano-capacitor.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ValidEnergyParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("stored energy {e:e} J outside [0, {e_max:e}] J")]
    OutOfRange { e: f64, e_max: f64 },
    #[error("time step {dt} s too coarse; at most {limit} s allowed")]
    StepTooCoarse { dt: f64, limit: f64 },
    #[error("invalid simulation setting: {0}")]
    InvalidSetting(String),
}

/// Energy spent in one active cycle, `L_f W E_p + L_f P_bit / f`.
pub fn cycle_energy(ep: &ValidEnergyParams, f: f64) -> f64 {
    cycle_energy_with(ep, f, ep.pulse_probability)
}

fn cycle_energy_with(ep: &ValidEnergyParams, f: f64, w: f64) -> f64 {
    let bits = f64::from(ep.frame_bits);
    bits * w * ep.pulse_energy + bits * ep.bit_power / f
}

/// Harvesting power at stored energy `e_nc`,
/// `ΔQ f_ng V_g √(e/E_max) (1 − √(e/E_max))`.
pub fn harvesting_rate(e_nc: f64, ep: &ValidEnergyParams) -> Result<f64, EnergyError> {
    let e_max = ep.e_max();
    if !(0.0..=e_max).contains(&e_nc) {
        return Err(EnergyError::OutOfRange { e: e_nc, e_max });
    }
    Ok(rate_unchecked(e_nc, ep, e_max))
}

fn rate_unchecked(e_nc: f64, ep: &ValidEnergyParams, e_max: f64) -> f64 {
    let s = (e_nc / e_max).sqrt();
    ep.charge_per_cycle * ep.generator_frequency * ep.generator_voltage * s * (1.0 - s)
}

/// Settings of one charge/discharge run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySimConfig {
    /// Active-cycle frequency (Hz).
    pub frequency: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Euler step (s).
    pub dt: f64,
    /// Constant pulse probability W used for every frame.
    pub pulse_probability: f64,
    /// Initial charge as a fraction of `e_max`. λ_h(0) = 0, so an empty
    /// capacitor never charges.
    pub initial_fraction: f64,
    /// Keep every `sample_every`-th step in the trajectory.
    pub sample_every: u64,
}

impl EnergySimConfig {
    pub fn new(ep: &ValidEnergyParams, frequency: f64, duration: f64) -> Self {
        Self {
            frequency,
            duration,
            dt: 1e-3,
            pulse_probability: ep.pulse_probability,
            initial_fraction: 0.05,
            sample_every: 1000,
        }
    }

    /// Largest step allowed, `1 / (10 max(f, f_ng))`.
    pub fn max_dt(&self, ep: &ValidEnergyParams) -> f64 {
        1.0 / (10.0 * self.frequency.max(ep.generator_frequency))
    }

    fn check(&self, ep: &ValidEnergyParams) -> Result<(), EnergyError> {
        let bad = |m: String| Err(EnergyError::InvalidSetting(m));
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad(format!("frequency must be > 0 (got {})", self.frequency));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0 (got {})", self.dt));
        }
        let limit = self.max_dt(ep);
        if self.dt > limit {
            return Err(EnergyError::StepTooCoarse { dt: self.dt, limit });
        }
        if !(self.duration.is_finite() && self.duration >= 100.0 / self.frequency) {
            return bad(format!(
                "duration must cover at least 100 cycles ({} s < {} s)",
                self.duration,
                100.0 / self.frequency
            ));
        }
        if !(0.0..=1.0).contains(&self.pulse_probability) {
            return bad(format!("pulse probability must lie in [0, 1] (got {})", self.pulse_probability));
        }
        if !(0.0..=1.0).contains(&self.initial_fraction) {
            return bad(format!("initial fraction must lie in [0, 1] (got {})", self.initial_fraction));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub time: f64,
    pub e_nc: f64,
    /// An active cycle fired at this instant.
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrajectory {
    pub e_max: f64,
    pub cycle_energy: f64,
    pub samples: Vec<EnergySample>,
    /// Time-average of the stored energy over the final half of the run.
    pub steady_state_estimate: f64,
    pub communication_events: Vec<f64>,
    pub skipped_cycles: u64,
    /// Skipped cycles in the final half of the run.
    pub skipped_after_warmup: u64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub harvested: f64,
    pub consumed: f64,
    /// Harvest discarded because the capacitor was full.
    pub clipped: f64,
}

impl EnergyTrajectory {
    /// `final − initial − (harvested − consumed − clipped)`; zero up to
    /// rounding.
    pub fn balance_drift(&self) -> f64 {
        self.final_energy - self.initial_energy - (self.harvested - self.consumed - self.clipped)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_s,e_nc_J,event")?;
        for s in &self.samples {
            writeln!(out, "{},{:e},{}", s.time, s.e_nc, u8::from(s.event))?;
        }
        Ok(())
    }
}

/// Integrates `de/dt = λ_h(e)` with explicit Euler. Every `1/f` seconds a
/// cycle fires if the stored energy covers [`cycle_energy`]; otherwise the
/// cycle is skipped.
pub fn simulate_energy(
    ep: &ValidEnergyParams,
    cfg: &EnergySimConfig,
) -> Result<EnergyTrajectory, EnergyError> {
    cfg.check(ep)?;
    let e_max = ep.e_max();
    let cost = cycle_energy_with(ep, cfg.frequency, cfg.pulse_probability);
    let period = 1.0 / cfg.frequency;
    let steps = (cfg.duration / cfg.dt).round() as u64;
    let warmup = 0.5 * cfg.duration;

    let mut e = cfg.initial_fraction * e_max;
    let initial_energy = e;
    let (mut harvested, mut consumed, mut clipped) = (0.0, 0.0, 0.0);
    let mut samples = vec![EnergySample {
        time: 0.0,
        e_nc: e,
        event: false,
    }];
    let mut events = Vec::new();
    let (mut skipped, mut skipped_late) = (0u64, 0u64);
    let mut next_cycle = 1u64;
    let (mut late_integral, mut late_time) = (0.0, 0.0);

    for step in 1..=steps {
        let gain = rate_unchecked(e, ep, e_max) * cfg.dt;
        harvested += gain;
        e += gain;
        if e > e_max {
            clipped += e - e_max;
            e = e_max;
        }
        let t = step as f64 * cfg.dt;

        let mut fired = false;
        // Cycle instants are compared on the step grid to avoid drift.
        while (next_cycle as f64) * period <= t + 0.5 * cfg.dt {
            let at = next_cycle as f64 * period;
            if e >= cost {
                e -= cost;
                consumed += cost;
                events.push(at);
                fired = true;
            } else {
                skipped += 1;
                if at > warmup {
                    skipped_late += 1;
                }
            }
            next_cycle += 1;
        }

        if t > warmup {
            late_integral += e * cfg.dt;
            late_time += cfg.dt;
        }
        if step % cfg.sample_every == 0 || fired || step == steps {
            samples.push(EnergySample {
                time: t,
                e_nc: e,
                event: fired,
            });
        }
    }

    Ok(EnergyTrajectory {
        e_max,
        cycle_energy: cost,
        samples,
        steady_state_estimate: if late_time > 0.0 {
            // The running sum may round a hair above a full capacitor.
            (late_integral / late_time).min(e_max)
        } else {
            e
        },
        communication_events: events,
        skipped_cycles: skipped,
        skipped_after_warmup: skipped_late,
        initial_energy,
        final_energy: e,
        harvested,
        consumed,
        clipped,
    })
}

/// Grid of candidate frequencies, ten per decade from 1 mHz to 1 kHz.
pub fn frequency_grid() -> Vec<f64> {
    (-30..=30).map(|i| 10f64.powf(f64::from(i) / 10.0)).collect()
}

/// Largest grid frequency at which the simulation skips no cycle after
/// warm-up; 0 if none qualifies.
pub fn max_sustainable_frequency(ep: &ValidEnergyParams) -> f64 {
    let e_max = ep.e_max();
    // Scan downward; the first feasible frequency is the answer.
    for &f in frequency_grid().iter().rev() {
        if cycle_energy(ep, f) > e_max {
            // The capacitor can never hold enough for a single cycle.
            continue;
        }
        let dt = (1.0 / (10.0 * f.max(ep.generator_frequency))).min(1e-3);
        let cfg = EnergySimConfig {
            frequency: f,
            duration: (100.0 / f).max(1000.0),
            dt,
            pulse_probability: ep.pulse_probability,
            initial_fraction: 0.05,
            sample_every: u64::MAX,
        };
        match simulate_energy(ep, &cfg) {
            Ok(tr) if tr.skipped_after_warmup == 0 => return f,
            _ => {}
        }
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::EnergyParams;

    fn defaults() -> ValidEnergyParams {
        EnergyParams::paper_defaults().validate().unwrap()
    }

    #[test]
    fn cycle_energy_examples() {
        let ep = defaults();
        // 64 · 0.1 fJ + 64 · 2.4 fW · 1 s
        assert!((cycle_energy(&ep, 1.0) - 160e-15).abs() < 1e-27);
        let silent = ep.with(|p| p.pulse_probability = 0.0).unwrap();
        assert!((cycle_energy(&silent, 1.0) - 153.6e-15).abs() < 1e-27);
        // Doubling f halves only the memory term.
        let mem1 = cycle_energy(&silent, 1.0);
        let mem2 = cycle_energy(&silent, 2.0);
        assert!((mem1 - 2.0 * mem2).abs() < 1e-28);
        assert!((cycle_energy(&ep, 2.0) - (6.4e-15 + 76.8e-15)).abs() < 1e-27);
    }

    #[test]
    fn harvesting_examples() {
        let ep = defaults();
        let e_max = ep.e_max();
        assert_eq!(harvesting_rate(0.0, &ep).unwrap(), 0.0);
        assert_eq!(harvesting_rate(e_max, &ep).unwrap(), 0.0);
        assert!((harvesting_rate(e_max / 4.0, &ep).unwrap() - 0.3e-12).abs() < 1e-24);
        assert!(harvesting_rate(-1e-20, &ep).is_err());
        assert!(harvesting_rate(1.01 * e_max, &ep).is_err());
    }

    #[test]
    fn harvesting_peak_on_grid() {
        let ep = defaults();
        let e_max = ep.e_max();
        let grid: Vec<f64> = (0..=4000).map(|i| e_max * f64::from(i) / 4000.0).collect();
        let rates: Vec<f64> = grid.iter().map(|&e| harvesting_rate(e, &ep).unwrap()).collect();
        assert!(rates.iter().all(|&r| r >= 0.0));
        let (imax, _) = rates
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(imax, 1000);
        assert!(rates[..imax].windows(2).all(|w| w[1] > w[0]));
        assert!(rates[imax..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn coarse_step_rejected() {
        let ep = defaults();
        let mut cfg = EnergySimConfig::new(&ep, 1.0, 200.0);
        cfg.dt = 0.5;
        assert!(matches!(simulate_energy(&ep, &cfg), Err(EnergyError::StepTooCoarse { .. })));
        cfg.dt = 1e-3;
        cfg.duration = 50.0;
        assert!(simulate_energy(&ep, &cfg).is_err());
    }

    /// Time-average of the stored energy on the periodic orbit of the
    /// exact dynamics. With `e = s² E_max`, the harvest law becomes
    /// `ds/dt = κ (1 − s)`, `κ = ΔQ f_ng V_g / (2 E_max)`, so between
    /// firings `1 − s` decays as `exp(−κt)`.
    fn periodic_orbit_mean(ep: &ValidEnergyParams, f: f64) -> (f64, f64) {
        let e_max = ep.e_max();
        let kappa = ep.charge_per_cycle * ep.generator_frequency * ep.generator_voltage / (2.0 * e_max);
        let period = 1.0 / f;
        let decay = (-kappa * period).exp();
        let drop = cycle_energy(ep, f) / e_max;
        // Iterate the post-firing level b: a = 1 − (1 − b)·decay, b² = a² − drop.
        let mut b = 0.5f64;
        for _ in 0..200 {
            let a = 1.0 - (1.0 - b) * decay;
            b = (a * a - drop).sqrt();
        }
        let c = 1.0 - b;
        let mean_s2 = 1.0 - 2.0 * c * (1.0 - decay) / (kappa * period)
            + c * c * (1.0 - decay * decay) / (2.0 * kappa * period);
        (mean_s2 * e_max, b * b * e_max)
    }

    #[test]
    fn defaults_match_periodic_orbit() {
        let ep = defaults();
        let tr = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 1000.0)).unwrap();
        assert_eq!(tr.skipped_after_warmup, 0);
        assert!(tr.samples.iter().all(|s| (0.0..=tr.e_max).contains(&s.e_nc)));
        let (mean, _) = periodic_orbit_mean(&ep, 1.0);
        assert!((mean - 133.6e-15).abs() < 0.2e-15, "{mean}");
        assert!((tr.steady_state_estimate - mean).abs() < 0.005 * mean, "{} vs {mean}", tr.steady_state_estimate);
    }

    #[test]
    fn conservation() {
        let ep = defaults();
        let tr = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 1000.0)).unwrap();
        assert!(tr.balance_drift().abs() < 1e-6 * tr.e_max);
    }

    #[test]
    fn steady_state_independent_of_start() {
        let ep = defaults();
        let mut lo = EnergySimConfig::new(&ep, 1.0, 1000.0);
        lo.initial_fraction = 0.1;
        let mut hi = lo.clone();
        hi.initial_fraction = 0.9;
        let a = simulate_energy(&ep, &lo).unwrap().steady_state_estimate;
        let b = simulate_energy(&ep, &hi).unwrap().steady_state_estimate;
        assert!((a - b).abs() < 0.02 * a);
    }

    #[test]
    fn step_halving_is_stable() {
        let ep = defaults();
        let cfg = EnergySimConfig::new(&ep, 1.0, 1000.0);
        let mut half = cfg.clone();
        half.dt = 5e-4;
        let a = simulate_energy(&ep, &cfg).unwrap().steady_state_estimate;
        let b = simulate_energy(&ep, &half).unwrap().steady_state_estimate;
        assert!((a - b).abs() < 1e-3 * a);
    }

    #[test]
    fn silent_node_still_pays_for_memory() {
        // With W = 0 the 153.6 fJ retention cost remains, so the level sits
        // only slightly above the W = 1 orbit.
        let ep = defaults();
        let mut cfg = EnergySimConfig::new(&ep, 1.0, 1000.0);
        cfg.pulse_probability = 0.0;
        let tr = simulate_energy(&ep, &cfg).unwrap();
        let silent = ep.with(|p| p.pulse_probability = 0.0).unwrap();
        let (mean, _) = periodic_orbit_mean(&silent, 1.0);
        assert_eq!(tr.skipped_after_warmup, 0);
        assert!((tr.steady_state_estimate - mean).abs() < 0.005 * mean);
        let loud = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 1000.0)).unwrap();
        assert!(tr.steady_state_estimate > loud.steady_state_estimate);
        assert!(tr.steady_state_estimate < 0.8 * tr.e_max);
    }

    #[test]
    fn free_cycles_fill_capacitor() {
        let ep = defaults()
            .with(|p| {
                p.pulse_energy = 0.0;
                p.bit_power = 0.0;
            })
            .unwrap();
        let tr = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 1000.0)).unwrap();
        assert!(tr.steady_state_estimate <= tr.e_max);
        assert!(tr.steady_state_estimate > 0.999 * tr.e_max);
        assert!(tr.samples.iter().all(|s| s.e_nc <= tr.e_max));
    }

    #[test]
    fn tenfold_pulse_energy_skips_cycles() {
        // 64 fJ + 153.6 fJ per cycle exceeds the 200 fJ capacity.
        let ep = defaults().with(|p| p.pulse_energy *= 10.0).unwrap();
        let tr = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 1000.0)).unwrap();
        assert!(tr.skipped_after_warmup > 0);
        assert!(tr.communication_events.is_empty());
    }

    #[test]
    fn cycle_beyond_capacity_always_skips() {
        let ep = defaults().with(|p| p.pulse_energy *= 100.0).unwrap();
        let tr = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 200.0)).unwrap();
        assert!(tr.communication_events.is_empty());
        assert_eq!(tr.skipped_cycles, 200);
    }

    #[test]
    fn sustainable_frequency_examples() {
        let ep = defaults();
        let f = max_sustainable_frequency(&ep);
        assert!(f >= 1.0);
        // Retention alone costs 153.6 fJ/s against a 300 fJ/s harvest peak.
        assert!(f < 23.0, "{f}");
        let free = ep.with(|p| {
            p.pulse_energy = 0.0;
            p.bit_power = 0.0;
        })
        .unwrap();
        assert_eq!(max_sustainable_frequency(&free), *frequency_grid().last().unwrap());
        let heavy = ep.with(|p| p.pulse_energy *= 100.0).unwrap();
        assert_eq!(max_sustainable_frequency(&heavy), 0.0);
    }

    #[test]
    fn csv_export() {
        let ep = defaults();
        let tr = simulate_energy(&ep, &EnergySimConfig::new(&ep, 1.0, 100.0)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,e_nc_J,event\n"));
        assert_eq!(text.lines().count(), tr.samples.len() + 1);
    }
}
