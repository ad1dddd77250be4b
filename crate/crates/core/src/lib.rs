//! A closed-loop GPS positioning laboratory.
//!
//! The crate simulates the nominal 24-satellite GPS constellation, synthesizes
//! dual-frequency code and carrier observables through a configurable error
//! chain, and inverts them again: exact three-sphere trilateration, iterative
//! least-squares position and clock estimation, dilution of precision,
//! differential corrections and carrier-phase ambiguity resolution.
//!
//! Every solver can be checked against the simulator that produced its input,
//! which is how the test suites exercise the whole chain end to end.

pub mod atmosphere;
pub mod carrier;
pub mod constellation;
pub mod dgps;
mod error;
pub mod format;
pub mod geo;
pub mod measurement;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::atmosphere::{IonosphereModel, TroposphereModel};
    pub use crate::constellation::{Constellation, LookAngles, OrbitalElements, SatelliteId};
    pub use crate::error::{Error, Result};
    pub use crate::geo::{Ecef, Epoch, Geodetic};
    pub use crate::measurement::{ErrorBudget, ObservationEpoch, ReceiverState, SatelliteState};
    pub use crate::solver::{DopValues, PvtSolution, RangeMeasurement, SolverConfig};
}
