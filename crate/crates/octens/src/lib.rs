//! octens: a weighted-ensemble toolkit for multi-label OCT biomarker
//! prediction.
//!
//! The library covers the full desk-scale pipeline around a set of
//! parallel branch models: grayscale OCT preprocessing and augmentation
//! ([`imagepipe`]), score/label/manifest file formats with eye-disjoint
//! splitting ([`data`]), multi-label F1 evaluation ([`metrics`]),
//! weighted score combination plus derivative-free weight search
//! ([`ensemble`]), and toy forward implementations of the branch models'
//! building blocks with verifiable structural invariants ([`blocks`]).
//!
//! The `octens` binary exposes each stage as a subcommand.

pub mod blocks;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod fixture;
pub mod imagepipe;
pub mod metrics;

pub use error::{Error, Result};
