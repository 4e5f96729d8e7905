//! Delayed Hegselmann-Krause opinion dynamics.
//!
//! Scenario data ([`model`]), a fixed-step delay integrator ([`integrator`]),
//! the five model right-hand sides ([`dynamics`]), consensus certificates and
//! verifiers ([`analysis`]) and file formats plus command drivers ([`io`]).

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;

pub use error::{AnalysisError, ConfigError, IntegrationError, LookupError};
pub use integrator::{integrate, HistoryBuffer, Trajectory};
pub use model::*;
