//! Simulation of a small-size robot soccer radio network: a computer sends
//! control frames to a base station, which broadcasts them to robots over a
//! 2 Mbps radio and forwards robot telemetry back.

pub mod codec;
pub mod config;
pub mod experiment;
pub mod link;
pub mod metrics;
pub mod node;
pub mod sim;
