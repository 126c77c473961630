//! Depth-20 limit-order-book replay with transient market impact.
//!
//! The crate covers the whole sell-only liquidation evaluation loop:
//!
//! * [`store`] loads and validates one day of 1 s depth-20 snapshots.
//! * [`indicators`] derives the microstructure feature set from a snapshot pair.
//! * [`engine`] settles market sells level by level with fees, latency and a
//!   transient, exponentially decaying price displacement.
//! * [`env`] wraps the engine into a fixed-horizon episode with observations,
//!   rewards and frozen observation normalisation.
//! * [`baselines`] builds TWAP and book-weighted schedules that run through the
//!   same episode machinery as any policy.
//! * [`eval`] runs the per-day protocol and aggregates to one score per day.
//! * [`stats`] holds the paired inference on daily gaps.
//! * [`pipeline`] wires the above into the `eval-compare` / `stats-eval` /
//!   `plot` / `ingest` commands, and [`bridge`] serves the episode over a
//!   line-delimited JSON protocol.
//!
//! Data-parallel loops (episodes within a day, bootstrap resamples) go through
//! [`par`], which uses rayon when the `parallel` feature is enabled and falls
//! back to plain iteration otherwise.

pub mod baselines;
pub mod bridge;
pub mod config;
pub mod engine;
pub mod env;
pub mod error;
pub mod eval;
pub mod indicators;
pub mod normalize;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod policy;
pub mod stats;
pub mod store;
pub mod synth;

pub use error::{Error, Result};

/// Number of price levels kept per side.
pub const DEPTH: usize = 20;
