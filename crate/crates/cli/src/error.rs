use nanonet_core::dimensioning::DimensioningError;
use nanonet_core::energy::EnergyError;
use nanonet_core::geometry::GeometryError;
use nanonet_core::markov::MarkovError;
use nanonet_core::params::ParamError;
use nanonet_core::scenario::ScenarioError;
use nanonet_core::simulator::SimError;
use nanonet_core::units::UnitError;

/// Failure classes, mapped onto exit codes 2, 3 and 4.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output: {0}")]
    Output(String),
    #[error("validation failed: simulation and model disagree")]
    ValidationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) | CliError::Output(_) => 3,
            CliError::ValidationFailed => 4,
        }
    }
}

macro_rules! input {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input!(ParamError, ScenarioError, UnitError);

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidInput(_) => CliError::Input(e.to_string()),
            GeometryError::Quadrature(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MarkovError> for CliError {
    fn from(e: MarkovError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<DimensioningError> for CliError {
    fn from(e: DimensioningError) -> Self {
        match e {
            DimensioningError::InvalidSpec(_) | DimensioningError::DeadlineTooShort { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InsufficientData(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::OutOfRange { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
