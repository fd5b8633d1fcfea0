//! Operator-learning toolkit for wave-domain channel modeling.
//!
//! The crate implements a Fourier neural operator from first principles —
//! dense tensors, a radix-2 FFT, spectral convolution layers with analytic
//! reverse-mode gradients, and an Adam trainer — together with the physics
//! oracles it learns from: a scalar Helmholtz Green's-function channel for
//! holographic apertures, and deformation-dependent multipath channels for
//! flexible metasurfaces with pilot-based estimation baselines.

pub mod baselines;
mod binio;
pub mod cli;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod fft;
pub mod fno;
pub mod metrics;
pub mod oracles;
pub mod report;
pub mod seed;
pub mod tensor;
pub mod threads;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{ComplexView, Tensor};
