//! Simulation and analysis toolkit for a traveling-wave microwave photodetector:
//! a weakly nonlinear metamaterial, continuously monitored by a single giant
//! probe mode, through which a single-photon wavepacket propagates.

pub mod conveyor;
pub mod detection;
pub mod error;
pub mod harness;
pub mod keldysh;
pub mod model;
pub mod mps;
pub mod ops;
pub mod quad;
pub mod seed;
pub mod table;

pub use error::{Error, Result};
