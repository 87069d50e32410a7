//! Discrete-event simulation of TETRA Short Data Service transfer over a
//! single cell's main control channel (MCCH).

pub mod bs_mac;
pub mod channel;
pub mod config;
pub mod metrics;
pub mod ms_mac;
pub mod rng;
pub mod tdma;
pub mod traffic;
pub mod engine;
pub mod sweep;
