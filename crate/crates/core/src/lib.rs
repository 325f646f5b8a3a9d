//! Distortion-rate theory of scalar quantizers with randomly placed
//! thresholds, with the Monte Carlo machinery to check it.
//!
//! - [`quantizer`]: encoding, decoding and exact conditional metrics for one
//!   threshold realization.
//! - [`closed_form`]: averaged distortion and entropy, penalty factors,
//!   harmonic numbers, dithered-bank and unequal-step expressions.
//! - [`montecarlo`]: seeded, thread-count independent estimators.
//! - [`dithered`]: banks of subtractively dithered uniform quantizers.
//! - [`invariants`]: the executable property suite.

pub mod closed_form;
pub mod dithered;
pub mod error;
pub mod invariants;
pub mod montecarlo;
pub mod quantizer;

pub use error::{Error, Result};
pub use quantizer::{Cell, ThresholdSet};

/// Seed used when none is configured.
pub const DEFAULT_SEED: u64 = 7;
