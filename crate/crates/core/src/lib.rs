//! Simulation and inversion of random Schrödinger scattering: the forward
//! Lippmann–Schwinger problem driven by Gaussian white noise, far-field
//! synthesis, and recovery of the source variance, the potential and the
//! source expectation from far-field data.

pub mod domain;
pub mod error;
pub mod fft3;

pub use error::{Error, Result};
pub mod greens;
pub mod noise;
pub mod forward;
pub mod inverse;
pub mod pipeline;
