//! Asymmetric Bingham fluids: constitutive law, convex-analysis checks and
//! desk-scale channel solvers with discrete energy accounting.

pub mod channel2d;
pub mod cli;
pub mod config;
pub mod constitutive;
pub mod convexcheck;
pub mod diagnostics;
pub mod error;
pub mod rng;
pub mod runner;
pub mod shear1d;
pub mod tensor3;

pub use constitutive::FluidParams;
pub use error::{Error, Result};
pub use tensor3::Mat3;
