//! Numerical toolkit for tunnel surgery on rotationally symmetric manifolds
//! with a spectral Ricci lower bound λ₁(−γΔ + Ric) ≥ λ.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod green_radial;
pub mod interp;
pub mod neck_profile;
pub mod ode;
pub mod params;
pub mod profile_file;
pub mod quad;
pub mod spectral;
pub mod tunnel;
pub mod warped_geometry;

pub use error::{Error, Result};
pub use params::Params;
