//! Polyharmonic problems `(-Δ)^m u = Q·H¹⌞Γ` on a rectangle with an interior interface curve Γ.
//!
//! The crate provides:
//! - [`geometry`]: parametric interface curves, projection and signed distance,
//! - [`grid`]: uniform grid fields, the 5-point Laplacian and one-sided derivative fits,
//! - [`assembly`]: Dirichlet Laplacian, measure loads and the signed-distance corrector,
//! - [`solve`]: conjugate gradients, a fast sine-transform solver and the Navier cascade,
//! - [`analysis`]: jump scans, regularity sweeps, total-variation profiles, order fits,
//! - [`oracle`]: exact radial solutions on the unit disk,
//! - [`altcaf`]: the radial biharmonic Alt-Caffarelli free-boundary problem,
//! - [`io`]: CSV and SVG writers.

pub mod altcaf;
pub mod analysis;
pub mod assembly;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod solve;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
