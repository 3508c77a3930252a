//! Discrete-event model of a TWDM-PON upstream carrying mobile fronthaul
//! next to conventional subscriber traffic, with the bandwidth allocation
//! schemes compared in the accompanying experiments.

pub mod config;
pub mod des;
pub mod dwba;
pub mod harness;
pub mod metrics;
pub mod pon;
pub mod sim;
pub mod traffic;
