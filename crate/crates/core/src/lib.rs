#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Continuous quantum measurement of a single spin by magnetic resonance
//! force microscopy.
//!
//! A spin-1/2 is coupled to a cantilever (a truncated harmonic oscillator)
//! whose position is monitored by homodyne detection. The crate evolves the
//! composite system under thermal noise and measurement back-action,
//! synthesizes photocurrent records, classifies the spin from them and
//! evaluates closed-form signal-to-noise expressions.

pub mod harness;
pub mod hilbert;
pub mod integrate;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod spectra;
