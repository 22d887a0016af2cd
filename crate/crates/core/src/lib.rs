//! Local-global neural operators with high-frequency propagation: FFT
//! primitives, patching, radial spectra, the LOGLO model, losses, metrics,
//! training and data generation.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod operator;
pub mod patching;
pub mod spectra;
pub mod tensor_fft;
pub mod train;

pub use error::{Error, Result};
pub use operator::{LogloModel, ModelConfig};
pub use patching::{extract_patches, reassemble_patches, PatchSet};
pub use spectra::{RadialSpec, RadialProfile};
pub use tensor_fft::{Field, InterpMode, NormMode, SpectralField};
