//! Preprocessing filters and Welch spectral estimation.

pub mod filter;
pub mod spectral;

pub use filter::{highpass_filter, notch_filter, Sos};
pub use spectral::{
    band_log_power, coherence_from_spectra, coherence_matrix, log_power_from_spectra, welch_spectra,
    CoherenceMatrix, LogPowerVector, SpectralConfig, Spectra, Window,
};
