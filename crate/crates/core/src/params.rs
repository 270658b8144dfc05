//! Scenario parameter sets and their validation.
//!
//! All fields are strict SI. Construction of a [`ValidParams`] or
//! [`ValidEnergyParams`] is the only way to hand parameters to the model,
//! so every downstream precondition is checked once, here.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest storage duration accepted, in rounds.
pub const MAX_K: u32 = 10_000;

/// Error carrying every violated invariant, not just the first one.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid parameters: {}", .0.join("; "))]
pub struct ParamError(pub Vec<String>);

/// Network scenario: node population, circuit, vein, radio and storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Number of nano-nodes.
    pub n: u64,
    /// Mean time to complete a round through the circuit (s).
    pub round_time: f64,
    /// Total fluid volume (m³).
    pub total_volume: f64,
    /// Diameter of the vein hosting the nano-router (m).
    pub vein_diameter: f64,
    /// Communication range of the nano-nodes (m).
    pub range: f64,
    /// Nano-node velocity inside the coverage zone (m/s).
    pub velocity: f64,
    /// Time to transmit one frame (s).
    pub frame_time: f64,
    /// Active cycles per second (Hz).
    pub frequency: f64,
    /// Fraction of the total flow passing the bio-sensor.
    pub eta: f64,
    /// Rounds a received frame is kept in memory.
    pub k: u32,
}

impl NetworkParams {
    /// Cephalic-vein scenario: D = 6 mm, v = 10.9 cm/s, r = 1 mm,
    /// t_f = 64 µs, 1/f = 1 s, 5 L of blood, T = 60 s, η = 0.1.
    pub fn paper_defaults() -> Self {
        Self {
            n: 10_000,
            round_time: 60.0,
            total_volume: 5e-3,
            vein_diameter: 6e-3,
            range: 1e-3,
            velocity: 0.109,
            frame_time: 64e-6,
            frequency: 1.0,
            eta: 0.1,
            k: 10,
        }
    }

    /// Distance travelled during one frame, `v · t_f`.
    pub fn shift(&self) -> f64 {
        self.velocity * self.frame_time
    }

    pub fn validate(&self) -> Result<ValidParams, ParamError> {
        let mut errs = Vec::new();
        if self.n < 1 {
            errs.push("n must be >= 1".to_string());
        }
        let positive = [
            ("round_time", self.round_time),
            ("total_volume", self.total_volume),
            ("vein_diameter", self.vein_diameter),
            ("range", self.range),
            ("velocity", self.velocity),
            ("frame_time", self.frame_time),
            ("frequency", self.frequency),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                errs.push(format!("{name} must be finite and > 0 (got {value})"));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            errs.push(format!("eta must lie in (0, 1] (got {})", self.eta));
        }
        if self.k < 2 || self.k > MAX_K {
            errs.push(format!("k must lie in [2, {MAX_K}] (got {})", self.k));
        }
        if errs.is_empty() {
            let crossing = 2.0 * self.range / self.velocity;
            let period = 1.0 / self.frequency;
            if crossing >= period {
                errs.push(format!(
                    "single transmission per crossing requires 2r/v < 1/f ({crossing:.6} s >= {period:.6} s)"
                ));
            }
        }
        if errs.is_empty() {
            Ok(ValidParams(self.clone()))
        } else {
            Err(ParamError(errs))
        }
    }
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

/// Frame time from frame length and bitrate (one bit per symbol).
pub fn frame_time_from_bitrate(frame_bits: u32, bitrate: f64) -> f64 {
    f64::from(frame_bits) / bitrate
}

/// [`NetworkParams`] that passed [`NetworkParams::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidParams(NetworkParams);

impl ValidParams {
    pub fn get(&self) -> &NetworkParams {
        &self.0
    }

    pub fn into_inner(self) -> NetworkParams {
        self.0
    }

    /// Revalidates a modified copy; used by sweeps and searches.
    pub fn with(&self, edit: impl FnOnce(&mut NetworkParams)) -> Result<ValidParams, ParamError> {
        let mut p = self.0.clone();
        edit(&mut p);
        p.validate()
    }
}

impl Deref for ValidParams {
    type Target = NetworkParams;
    fn deref(&self) -> &NetworkParams {
        &self.0
    }
}

impl fmt::Display for NetworkParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} T={} V_t={} D={} r={} v={} t_f={} f={} eta={} k={}",
            self.n,
            self.round_time,
            self.total_volume,
            self.vein_diameter,
            self.range,
            self.velocity,
            self.frame_time,
            self.frequency,
            self.eta,
            self.k
        )
    }
}

/// Nano-node energy budget: TS-OOK transmission, memory retention and
/// piezoelectric harvesting into a nano-capacitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Frame length L_f (bits).
    pub frame_bits: u32,
    /// Probability W of sending a pulse for a bit.
    pub pulse_probability: f64,
    /// Energy of one pulse E_p (J).
    pub pulse_energy: f64,
    /// Power to retain one bit in memory P_bit (W).
    pub bit_power: f64,
    /// Charge per compress-release cycle ΔQ (C).
    pub charge_per_cycle: f64,
    /// Generated voltage V_g (V).
    pub generator_voltage: f64,
    /// Nano-capacitor capacitance C (F).
    pub capacitance: f64,
    /// Compress-release frequency f_ng (Hz).
    pub generator_frequency: f64,
}

impl EnergyParams {
    pub fn paper_defaults() -> Self {
        Self {
            frame_bits: 64,
            pulse_probability: 1.0,
            pulse_energy: 0.1e-15,
            bit_power: 2.4e-15,
            charge_per_cycle: 6e-12,
            generator_voltage: 0.2,
            capacitance: 10e-12,
            generator_frequency: 1.0,
        }
    }

    /// Capacity of the nano-capacitor, `C · V_g² / 2`.
    pub fn e_max(&self) -> f64 {
        self.capacitance * self.generator_voltage * self.generator_voltage / 2.0
    }

    pub fn validate(&self) -> Result<ValidEnergyParams, ParamError> {
        let mut errs = Vec::new();
        if self.frame_bits == 0 {
            errs.push("frame_bits must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.pulse_probability) {
            errs.push(format!(
                "pulse_probability must lie in [0, 1] (got {})",
                self.pulse_probability
            ));
        }
        for (name, value) in [
            ("pulse_energy", self.pulse_energy),
            ("bit_power", self.bit_power),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                errs.push(format!("{name} must be finite and >= 0 (got {value})"));
            }
        }
        for (name, value) in [
            ("charge_per_cycle", self.charge_per_cycle),
            ("generator_voltage", self.generator_voltage),
            ("capacitance", self.capacitance),
            ("generator_frequency", self.generator_frequency),
        ] {
            if !(value.is_finite() && value > 0.0) {
                errs.push(format!("{name} must be finite and > 0 (got {value})"));
            }
        }
        if errs.is_empty() {
            Ok(ValidEnergyParams(self.clone()))
        } else {
            Err(ParamError(errs))
        }
    }
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidEnergyParams(EnergyParams);

impl ValidEnergyParams {
    pub fn get(&self) -> &EnergyParams {
        &self.0
    }

    pub fn with(
        &self,
        edit: impl FnOnce(&mut EnergyParams),
    ) -> Result<ValidEnergyParams, ParamError> {
        let mut p = self.0.clone();
        edit(&mut p);
        p.validate()
    }
}

impl Deref for ValidEnergyParams {
    type Target = EnergyParams;
    fn deref(&self) -> &EnergyParams {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_accepted() {
        let p = NetworkParams::paper_defaults().validate().unwrap();
        // 2r/v ≈ 0.0183 s < 1 s
        let crossing = 2.0 * p.range / p.velocity;
        assert!((crossing - 0.018_348_623_853_211_01).abs() < 1e-12);
        assert!(crossing < 1.0 / p.frequency);
    }

    #[test]
    fn zero_eta_is_rejected() {
        let mut p = NetworkParams::paper_defaults();
        p.eta = 0.0;
        let err = p.validate().unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("eta")));
    }

    #[test]
    fn every_violation_is_reported() {
        let p = NetworkParams {
            n: 0,
            range: 0.0,
            eta: 1.5,
            k: 1,
            ..NetworkParams::paper_defaults()
        };
        let err = p.validate().unwrap_err();
        assert_eq!(err.0.len(), 4, "{err}");
    }

    #[test]
    fn crossing_longer_than_cycle_is_rejected() {
        let p = NetworkParams {
            velocity: 1e-3,
            ..NetworkParams::paper_defaults()
        };
        let err = p.validate().unwrap_err();
        assert!(err.0[0].contains("2r/v"));
    }

    #[test]
    fn k_cap() {
        let mut p = NetworkParams::paper_defaults();
        p.k = MAX_K;
        assert!(p.validate().is_ok());
        p.k = MAX_K + 1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn frame_time_from_rate() {
        assert_eq!(frame_time_from_bitrate(64, 1e6), 6.4e-5);
    }

    #[test]
    fn e_max_is_200_fj() {
        let e = EnergyParams::paper_defaults();
        assert!((e.e_max() - 200e-15).abs() < 1e-27);
    }

    #[test]
    fn energy_validation() {
        let mut e = EnergyParams::paper_defaults();
        e.pulse_probability = 1.2;
        e.capacitance = -1.0;
        assert_eq!(e.validate().unwrap_err().0.len(), 2);
        let zero = EnergyParams {
            pulse_energy: 0.0,
            bit_power: 0.0,
            ..EnergyParams::paper_defaults()
        };
        assert!(zero.validate().is_ok());
    }
}
