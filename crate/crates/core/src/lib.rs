//! Joint positioning/sensing beamforming design at desk scale.
//!
//! The crate models a downlink MIMO-OFDM link in which a base station
//! simultaneously serves a bistatic positioning receiver (the UE) and a
//! monostatic sensing receiver co-located with itself. It provides
//! Fisher-information and Cramér-Rao bound machinery for both links, a
//! small dense semidefinite/conic optimization core, and the digital and
//! analog beamforming designs that trade positioning accuracy against
//! sensing accuracy. A CLI (`bpms`) sweeps the tradeoff and emits CSV/JSON
//! artifacts.

pub mod analog;
pub mod config;
pub mod conic;
pub mod digital;
pub mod error;
pub mod fim;
pub mod scenario;
pub mod sweep;

pub use config::{load_config, ScenarioConfig, SPEED_OF_LIGHT};
pub use error::{Error, Result};
