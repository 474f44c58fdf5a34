//! Reputation aggregation over consumer rating logs.
//!
//! The pipeline: parse rating files into an indexed table ([`ingest`]),
//! derive six behavioural variables per consumer ([`profile`]), train
//! regressors that predict consumer reliability under seeded k-fold
//! cross-validation and invert predictions into weights ([`learn`]),
//! aggregate weighted product scores alongside classical baselines
//! ([`aggregate`]), and evaluate score tables by rating-level error and
//! rank correlation ([`evaluate`]).
//!
//! Every keyed structure is ordered and all randomness flows from one
//! caller-supplied seed, so identical inputs produce byte-identical
//! outputs regardless of thread count.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod fmt;
pub mod ingest;
pub mod learn;
pub mod profile;

pub use error::{Error, Result};
