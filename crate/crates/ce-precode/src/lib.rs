//! Per-antenna constant-envelope (CE) precoding for the multi-user MIMO
//! Gaussian broadcast channel.
//!
//! A base station with `N` antennas serves `M` single-antenna users while
//! every antenna transmits at the same fixed amplitude `sqrt(P_T/N)`; only the
//! phase of each antenna carries information. The library provides:
//!
//! - seeded i.i.d. Rayleigh channel generation ([`channel`])
//! - information alphabets and symbol sampling ([`alphabet`])
//! - the coordinate-descent CE precoder and a ZF phase-only baseline
//!   ([`precoder`])
//! - multi-user interference (MUI), SINR and ergodic-rate estimation plus the
//!   power/energy searches built on them ([`metrics`])
//! - the cooperative water-filling sum-capacity upper bound ([`capacity`])
//! - empirical checks of the Gaussian limit of the random received vector and
//!   box-event probabilities ([`stats`])
//! - a CLI experiment harness with CSV output ([`harness`])

pub mod alphabet;
pub mod capacity;
pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod precoder;
pub mod rng;
pub mod stats;

pub use error::CeError;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, CeError>;
