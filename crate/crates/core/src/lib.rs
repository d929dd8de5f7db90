//! Forensic toolkit for floating-point and sketch-based local differential
//! privacy mechanisms.
//!
//! The crate reimplements a family of deployed client-side mechanisms whose
//! samplers leak through their floating-point structure, the attacks that
//! exploit those leaks, and a Bayesian estimator that turns attack confusion
//! matrices into (ε, δ) lower bounds with calibrated confidence.

pub mod attacks;
pub mod audit;
pub mod error;
pub mod gaussian;
pub mod laplace;
pub mod rng;
pub mod secagg;
pub mod sketch;

pub use error::{Error, Result};
