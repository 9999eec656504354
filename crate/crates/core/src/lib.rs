//! Second-order coherence toolkit for continuous-wave heralded single-photon
//! sources based on parametric down-conversion.
//!
//! - [`model`]: exact low-gain coherence functions at infinite resolution
//! - [`response`]: what jittery detectors and finite windows actually measure
//! - [`simulate`]: Monte-Carlo time-tag streams
//! - [`coincidence`]: streaming singles, delay histograms and triple surfaces
//! - [`discrete`]: discrete-mode lattice, closed forms and independent oracles
//! - [`fit`]: recovery of source and detector parameters from measured curves

pub mod coincidence;
pub mod curve;
pub mod discrete;
pub mod error;
pub mod fit;
pub mod model;
pub mod par;
pub mod quad;
pub mod response;
pub mod simulate;

pub use error::{Error, Result};
