//! A desk-scale laboratory for black-box poisoning attacks on learned
//! query-driven cardinality estimators.
//!
//! The pipeline: synthesize a relational database with an exact cardinality
//! oracle ([`datastore`]), express queries as fixed-length vectors
//! ([`querylang`]), train differentiable cardinality estimators
//! ([`estimators`]), extract a white-box surrogate from a black-box model
//! ([`surrogate`]), train a reconstruction-based anomaly detector
//! ([`detector`]), train a noise-fed generator that crafts poisoning queries
//! against the surrogate ([`poisongen`]), and orchestrate end-to-end
//! experiments with baselines and reports ([`harness`]).

pub mod autodiff;
pub mod datastore;
pub mod detector;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod poisongen;
pub mod querylang;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
