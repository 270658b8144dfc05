//! Scenario files: JSON documents whose values carry their unit,
//! `{"value": 6, "unit": "mm"}`, converted to SI at load time.
//!
//! ```json
//! {
//!   "name": "cephalic",
//!   "network": { "n": {"value": 10000, "unit": ""}, "D": {"value": 6, "unit": "mm"} },
//!   "energy": { "E_p": {"value": 0.1, "unit": "fJ"} },
//!   "application": {
//!     "name": "bacterial",
//!     "eta": {"value": 0.1, "unit": ""},
//!     "requirement": {
//!       "kind": "deadline",
//!       "tau_target": {"value": 1, "unit": "h"},
//!       "qod_target": {"value": 0.99, "unit": ""}
//!     }
//!   }
//! }
//! ```
//!
//! Missing network and energy fields fall back to the cephalic-vein
//! defaults. Emitted scenarios are written in SI so that reloading them is
//! exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimensioning::{ApplicationSpec, Requirement};
use crate::params::{EnergyParams, NetworkParams};
use crate::units::{si_convert, UnitError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {source}")]
    Unit { field: String, source: UnitError },
    #[error("field `{field}`: {value} is not a non-negative integer")]
    NotInteger { field: String, value: f64 },
    #[error("scenario has no `{0}` section")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    #[serde(default)]
    pub unit: String,
}

impl Quantity {
    pub fn si(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: unit.into(),
        }
    }

    fn to_si(&self, field: &str) -> Result<f64, ScenarioError> {
        si_convert(self.value, &self.unit).map_err(|source| ScenarioError::Unit {
            field: field.into(),
            source,
        })
    }

    fn to_count(&self, field: &str) -> Result<u64, ScenarioError> {
        let x = self.to_si(field)?;
        if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
            return Err(ScenarioError::NotInteger {
                field: field.into(),
                value: x,
            });
        }
        Ok(x as u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Quantity>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub round_time: Option<Quantity>,
    #[serde(rename = "V_t", default, skip_serializing_if = "Option::is_none")]
    pub total_volume: Option<Quantity>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub vein_diameter: Option<Quantity>,
    #[serde(rename = "r", default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Quantity>,
    #[serde(rename = "v", default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Quantity>,
    #[serde(rename = "t_f", default, skip_serializing_if = "Option::is_none")]
    pub frame_time: Option<Quantity>,
    #[serde(rename = "f", default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Quantity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    #[serde(rename = "L_f", default, skip_serializing_if = "Option::is_none")]
    pub frame_bits: Option<Quantity>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub pulse_probability: Option<Quantity>,
    #[serde(rename = "E_p", default, skip_serializing_if = "Option::is_none")]
    pub pulse_energy: Option<Quantity>,
    #[serde(rename = "P_bit", default, skip_serializing_if = "Option::is_none")]
    pub bit_power: Option<Quantity>,
    #[serde(rename = "delta_q", default, skip_serializing_if = "Option::is_none")]
    pub charge_per_cycle: Option<Quantity>,
    #[serde(rename = "V_g", default, skip_serializing_if = "Option::is_none")]
    pub generator_voltage: Option<Quantity>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub capacitance: Option<Quantity>,
    #[serde(rename = "f_ng", default, skip_serializing_if = "Option::is_none")]
    pub generator_frequency: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RequirementSection {
    Deadline {
        tau_target: Quantity,
        qod_target: Quantity,
    },
    Throughput {
        throughput_target: Quantity,
        tau_av_target: Quantity,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationSection {
    pub name: String,
    pub eta: Quantity,
    pub requirement: RequirementSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub application: Option<ApplicationSection>,
}

fn or_default(q: &Option<Quantity>, field: &str, default: f64) -> Result<f64, ScenarioError> {
    q.as_ref().map_or(Ok(default), |q| q.to_si(field))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Network parameters in SI. Not validated, so callers can report every
    /// violated invariant at once.
    pub fn network_params(&self) -> Result<NetworkParams, ScenarioError> {
        let s = &self.network;
        let d = NetworkParams::paper_defaults();
        let k = match &s.k {
            Some(q) => {
                let k = q.to_count("k")?;
                u32::try_from(k).map_err(|_| ScenarioError::NotInteger {
                    field: "k".into(),
                    value: k as f64,
                })?
            }
            None => d.k,
        };
        Ok(NetworkParams {
            n: s.n.as_ref().map_or(Ok(d.n), |q| q.to_count("n"))?,
            round_time: or_default(&s.round_time, "T", d.round_time)?,
            total_volume: or_default(&s.total_volume, "V_t", d.total_volume)?,
            vein_diameter: or_default(&s.vein_diameter, "D", d.vein_diameter)?,
            range: or_default(&s.range, "r", d.range)?,
            velocity: or_default(&s.velocity, "v", d.velocity)?,
            frame_time: or_default(&s.frame_time, "t_f", d.frame_time)?,
            frequency: or_default(&s.frequency, "f", d.frequency)?,
            eta: or_default(&s.eta, "eta", d.eta)?,
            k,
        })
    }

    /// Energy parameters in SI; defaults when the section is absent.
    pub fn energy_params(&self) -> Result<EnergyParams, ScenarioError> {
        let d = EnergyParams::paper_defaults();
        let Some(s) = &self.energy else {
            return Ok(d);
        };
        let frame_bits = match &s.frame_bits {
            Some(q) => {
                let b = q.to_count("L_f")?;
                u32::try_from(b).map_err(|_| ScenarioError::NotInteger {
                    field: "L_f".into(),
                    value: b as f64,
                })?
            }
            None => d.frame_bits,
        };
        Ok(EnergyParams {
            frame_bits,
            pulse_probability: or_default(&s.pulse_probability, "W", d.pulse_probability)?,
            pulse_energy: or_default(&s.pulse_energy, "E_p", d.pulse_energy)?,
            bit_power: or_default(&s.bit_power, "P_bit", d.bit_power)?,
            charge_per_cycle: or_default(&s.charge_per_cycle, "delta_q", d.charge_per_cycle)?,
            generator_voltage: or_default(&s.generator_voltage, "V_g", d.generator_voltage)?,
            capacitance: or_default(&s.capacitance, "C", d.capacitance)?,
            generator_frequency: or_default(&s.generator_frequency, "f_ng", d.generator_frequency)?,
        })
    }

    pub fn application(&self) -> Result<ApplicationSpec, ScenarioError> {
        let a = self.application.as_ref().ok_or(ScenarioError::Missing("application"))?;
        let requirement = match &a.requirement {
            RequirementSection::Deadline {
                tau_target,
                qod_target,
            } => Requirement::Deadline {
                tau_target: tau_target.to_si("tau_target")?,
                qod_target: qod_target.to_si("qod_target")?,
            },
            RequirementSection::Throughput {
                throughput_target,
                tau_av_target,
            } => Requirement::Throughput {
                throughput_target: throughput_target.to_si("throughput_target")?,
                tau_av_target: tau_av_target.to_si("tau_av_target")?,
            },
        };
        Ok(ApplicationSpec {
            name: a.name.clone(),
            eta: a.eta.to_si("eta")?,
            requirement,
        })
    }

    /// Scenario holding `p` in SI units, every field explicit.
    pub fn from_network(p: &NetworkParams) -> Self {
        let q = Quantity::si;
        Self {
            name: None,
            network: NetworkSection {
                n: Some(q(p.n as f64, "")),
                round_time: Some(q(p.round_time, "s")),
                total_volume: Some(q(p.total_volume, "m3")),
                vein_diameter: Some(q(p.vein_diameter, "m")),
                range: Some(q(p.range, "m")),
                velocity: Some(q(p.velocity, "m/s")),
                frame_time: Some(q(p.frame_time, "s")),
                frequency: Some(q(p.frequency, "Hz")),
                eta: Some(q(p.eta, "")),
                k: Some(q(f64::from(p.k), "")),
            },
            energy: None,
            application: None,
        }
    }

    pub fn with_energy(mut self, e: &EnergyParams) -> Self {
        let q = Quantity::si;
        self.energy = Some(EnergySection {
            frame_bits: Some(q(f64::from(e.frame_bits), "bit")),
            pulse_probability: Some(q(e.pulse_probability, "")),
            pulse_energy: Some(q(e.pulse_energy, "J")),
            bit_power: Some(q(e.bit_power, "W")),
            charge_per_cycle: Some(q(e.charge_per_cycle, "C")),
            generator_voltage: Some(q(e.generator_voltage, "V")),
            capacitance: Some(q(e.capacitance, "F")),
            generator_frequency: Some(q(e.generator_frequency, "Hz")),
        });
        self
    }

    pub fn with_application(mut self, a: &ApplicationSpec) -> Self {
        let q = Quantity::si;
        let requirement = match a.requirement {
            Requirement::Deadline {
                tau_target,
                qod_target,
            } => RequirementSection::Deadline {
                tau_target: q(tau_target, "s"),
                qod_target: q(qod_target, ""),
            },
            Requirement::Throughput {
                throughput_target,
                tau_av_target,
            } => RequirementSection::Throughput {
                throughput_target: q(throughput_target, "frames/s"),
                tau_av_target: q(tau_av_target, "s"),
            },
        };
        self.application = Some(ApplicationSection {
            name: a.name.clone(),
            eta: q(a.eta, ""),
            requirement,
        });
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scenario_is_the_default() {
        let s = Scenario::from_json("{}").unwrap();
        assert_eq!(s.network_params().unwrap(), NetworkParams::paper_defaults());
        assert_eq!(s.energy_params().unwrap(), EnergyParams::paper_defaults());
        assert!(matches!(s.application(), Err(ScenarioError::Missing(_))));
    }

    #[test]
    fn units_are_converted() {
        let s = Scenario::from_json(
            r#"{"network": {
                "D": {"value": 5, "unit": "mm"},
                "v": {"value": 10.9, "unit": "cm/s"},
                "t_f": {"value": 64, "unit": "µs"},
                "V_t": {"value": 5, "unit": "L"},
                "T": {"value": 1, "unit": "min"},
                "n": {"value": 1e4, "unit": ""}
            },
            "energy": {"E_p": {"value": 0.1, "unit": "fJ"}, "C": {"value": 10, "unit": "pF"}}}"#,
        )
        .unwrap();
        let p = s.network_params().unwrap();
        assert_eq!(p.vein_diameter, 0.005);
        assert_eq!(p.velocity, 0.109);
        assert_eq!(p.frame_time, 6.4e-5);
        assert_eq!(p.total_volume, 0.005);
        assert_eq!(p.round_time, 60.0);
        assert_eq!(p.n, 10_000);
        let e = s.energy_params().unwrap();
        assert_eq!(e.capacitance, 1e-11);
        assert!((e.pulse_energy - 1e-16).abs() <= f64::EPSILON * 1e-16);
    }

    #[test]
    fn bad_inputs() {
        let unit = Scenario::from_json(r#"{"network": {"D": {"value": 5, "unit": "furlong"}}}"#).unwrap();
        assert!(matches!(unit.network_params(), Err(ScenarioError::Unit { .. })));
        let frac = Scenario::from_json(r#"{"network": {"n": {"value": 2.5}}}"#).unwrap();
        assert!(matches!(frac.network_params(), Err(ScenarioError::NotInteger { .. })));
        assert!(Scenario::from_json(r#"{"network": {"diameter": {"value": 5}}}"#).is_err());
        assert!(Scenario::from_json("[1, 2").is_err());
    }

    #[test]
    fn application_section() {
        let s = Scenario::from_json(
            r#"{"application": {"name": "heart", "eta": {"value": 0.35},
                "requirement": {"kind": "deadline",
                    "tau_target": {"value": 15, "unit": "min"},
                    "qod_target": {"value": 0.99}}}}"#,
        )
        .unwrap();
        assert_eq!(s.application().unwrap(), ApplicationSpec::deadline("heart", 0.35, 900.0, 0.99));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut p = NetworkParams::paper_defaults();
        p.range = 1.234_567_890_123e-3;
        p.eta = 0.0056;
        let e = EnergyParams::paper_defaults();
        for app in ApplicationSpec::reference_applications() {
            let s = Scenario::from_network(&p).with_energy(&e).with_application(&app);
            let back = Scenario::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.network_params().unwrap(), p);
            assert_eq!(back.energy_params().unwrap(), e);
            assert_eq!(back.application().unwrap(), app);
        }
    }
}
