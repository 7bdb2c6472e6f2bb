//! Local unitary model of a Bell-EPR measurement.
//!
//! An entangled photon pair is absorbed by four detectors (`LV`, `LH`, `RV`,
//! `RH`), each with a finite internal environment. Tracing out those
//! environments leaves a reduced density matrix over pointer readings whose
//! off-diagonal entries are products of one small local factor per detector.
//! Observer statistics are then sampled branch by branch.
//!
//! Modules, bottom up:
//!
//! - [`qstate`]: dense kets, operators, partial trace.
//! - [`photon`]: singlet state and analyzer rotations.
//! - [`detector`]: internal distributions, Haar absorption unitaries,
//!   decoherence factors.
//! - [`chain`]: branch construction and the reduced density matrix (structured
//!   route plus dense oracle).
//! - [`correlate`]: Z readout, trial sampling, correlation, CHSH, no-signaling.
//! - [`study`]: experiment configuration, the five study types, JSON/CSV output.

pub mod chain;
pub mod correlate;
pub mod detector;
pub mod error;
pub mod haar;
pub mod photon;
pub mod qstate;
pub mod rng;
pub mod study;

pub use error::{Error, Result};
