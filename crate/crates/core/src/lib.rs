//! Double-station CSMA/CA laboratory.
//!
//! Two time counters living on different stations form a *TCPair*; when one of
//! them expires the pair performs a superimposed transmission to a common
//! destination. This crate models that protocol at slot level:
//!
//! - [`params`] and [`partner`]: protocol parameters, frame timings and the
//!   partner map with its 1-based counter-index algebra.
//! - [`config`]: the plain-text `key = value` / matrix-block file format.
//! - [`chain_oracle`]: the explicit per-pair Markov chain, solved densely. It is
//!   the ground truth the closed-form engine is checked against.
//! - [`analytic`]: block recurrences for the stationary state probabilities,
//!   their derivatives in the collision probability, the fixed point for that
//!   probability, and saturation throughput.
//! - [`simulator`]: seeded slot-level Monte Carlo of the protocol and of
//!   conventional CSMA/CA.
//! - [`optimizer`]: initial-window and pair-count selection, and degree-balanced
//!   partner-map search.

pub mod analytic;
pub mod chain_oracle;
pub mod config;
mod error;
pub mod optimizer;
pub mod params;
pub mod partner;
pub mod simulator;

pub use error::{Error, Result};
pub use params::{FrameTimings, ProtocolParams};
pub use partner::{CounterIndex, PartnerMap};
