//! Complex-valued restricted Boltzmann machines for STFT spectra, with the
//! surrounding pipeline: complex PCA, trajectory smoothing over delta
//! features, STFT analysis and synthesis, and binary model files.

pub mod complex;
pub mod cpca;
pub mod crbm;
pub mod error;
pub mod gbrbm;
pub mod optim;
pub mod persistence;
pub mod pipeline;
pub mod sequence;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
