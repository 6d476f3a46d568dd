//! SELD-TCN style networks over real, quaternion and dual-quaternion
//! algebras.

mod config;
mod network;

pub use config::{fibonacci, receptive_field, ModelConfig, ModelKind};
pub use network::{build, LayerInfo, Network, NetworkDescription, SeldOutput};
