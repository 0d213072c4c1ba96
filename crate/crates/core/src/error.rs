use thiserror::Error;

/// Errors raised by the network model and the closed-loop simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WpcnError {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error: {0}")]
    Io(String),

    /// A node was asked to spend more energy than its battery holds.
    #[error("battery overdraw at node {node} in slot {slot}: deficit {deficit:e} J")]
    BatteryOverdraw { node: usize, slot: u64, deficit: f64 },
}

impl WpcnError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        WpcnError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for WpcnError {
    fn from(err: std::io::Error) -> Self {
        WpcnError::Io(err.to_string())
    }
}

impl From<csv::Error> for WpcnError {
    fn from(err: csv::Error) -> Self {
        WpcnError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WpcnError>;
