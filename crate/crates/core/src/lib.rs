//! Time-domain acoustic scattering by sound-soft screens with Galerkin
//! boundary elements, convolution quadrature and adaptive mesh refinement.

pub mod adaptive;
pub mod assembly;
pub mod cq;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod solver;
pub mod estimator;
pub mod experiments;

pub use error::{Error, Result};
