//! Joint data routing and energy beamforming for multi-hop wireless-powered
//! networks.
//!
//! A multi-antenna energy access point (EAP) charges battery-powered nodes
//! over the air; the nodes relay data streams to their sinks. Each slot the
//! controller picks data-link powers and routes from backpressure weights
//! that are corrected by battery levels. It also picks an energy beam (the
//! dominant eigenvector of a weighted sum-channel matrix) and switches the
//! EAP fully on or off. The [`simulator`] closes the loop and checks the
//! battery and drift guarantees every slot.

pub mod capacity;
pub mod channel;
pub mod config;
pub mod eigen;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod output;
pub mod policy_data;
pub mod policy_energy;
pub mod simulator;
pub mod validate;

pub use capacity::CapacityParams;
pub use channel::{ChannelConfig, ChannelRealization, ChannelSampler};
pub use config::ConfigFile;
pub use error::{Result, WpcnError};
pub use model::{ArrivalBatch, Link, NetworkState, NetworkTopology, Stream, SystemConstants};
pub use simulator::{run, sweep_v, RunConfig, RunMetrics, Simulation};
