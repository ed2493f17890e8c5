//! Functional-connectivity features from multichannel trial recordings and
//! leave-one-subject-out detection of recall failures.
//!
//! Three feature families are extracted per trial and frequency band:
//!
//! - connectivity structure: descending eigenvalues of the band coherence matrix
//! - graph variability: spread of path length and degree across nodes of
//!   top-k coherence graphs at fixed mean degrees
//! - log power: per-channel log of mean in-band spectral density
//!
//! Each (family, band) cell is z-scored, PCA-reduced and scored with a Gaussian
//! log-likelihood ratio; cells are fused by summing ratios and evaluated by AUC.

pub mod config;
pub mod connstruct;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod graphnet;
pub mod io;
pub mod learn;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
