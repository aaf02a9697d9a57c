//! Gaussian phase-space simulator for multipartite Bell tests whose
//! entanglement is distributed by heralded entanglement swapping and probed
//! with displacement-based on/off detection.
//!
//! Pipeline: [`network`] builds the squeezed-state network, [`herald`]
//! conditions on the swap outcome, [`measurement`] evaluates correlators and
//! [`bell`] reduces them to the Bell functional. [`probabilities`] and
//! [`polytope`] test the full outcome distribution against local models,
//! [`optimize`] searches the parameter landscape and [`fock`] is an
//! independent number-basis reference.

pub mod bell;
pub mod error;
pub mod fock;
pub mod gauss;
pub mod herald;
pub mod measurement;
pub mod network;
pub mod noise;
pub mod optimize;
pub mod polytope;
pub mod probabilities;

pub use bell::{bell_value, evaluate_experiment, quantum_bound, CorrelatorTable, ExperimentOutcome};
pub use error::{Error, Result};
pub use measurement::{settings_from_reference, Displacement, MeasurementPlan};
pub use network::{ChannelConfig, SqueezerBank};
pub use noise::NoiseConfig;
pub use probabilities::OutcomeTable;
