//! Geometry-agnostic multichannel audio frontend.
//!
//! Microphone signals are mixed into the spherical harmonic domain, framed
//! into magnitude spectra, and reduced to a single enhanced spectrogram by a
//! small attention network.

pub mod error;
pub mod geometry;
pub mod harmonics;
pub mod io;
pub mod profile;
pub mod sht_frontend;
pub mod simulate;
pub mod ssafn;
pub mod stft;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
