//! Analytical and simulation model of a flow-guided nano-network that
//! delivers bio-sensor readings to a nano-router through the bloodstream.

pub mod chain;
pub mod dimensioning;
pub mod energy;
pub mod geometry;
pub mod markov;
pub mod params;
pub mod quadrature;
pub mod scenario;
pub mod simulator;
pub mod stats;
pub mod units;

pub use geometry::{volumes, RegionKind, RegionSpec, VolumeSet};
pub use markov::{analyze, analyze_with, AnalyticMetrics, TransmitWindow};
pub use params::{EnergyParams, NetworkParams, ValidEnergyParams, ValidParams};
