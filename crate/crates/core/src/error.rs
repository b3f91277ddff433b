use thiserror::Error;

use crate::grid::GridField;
use crate::solve::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("interface touches or crosses the domain boundary (distance {distance:.3e})")]
    InterfaceTouchesBoundary { distance: f64 },

    #[error("projection onto the curve did not converge for point ({x}, {y})")]
    NoConvergence { x: f64, y: f64 },

    #[error("one-sided probe at ({x}, {y}) found only {found} usable nodes on the requested side (need {needed})")]
    ProbeCrossesInterface { x: f64, y: f64, found: usize, needed: usize },

    #[error("one-sided probe at ({x}, {y}) leaves the domain")]
    ProbeLeavesDomain { x: f64, y: f64 },

    #[error("curve quadrature under-resolved: {samples} samples (minimum 64)")]
    QuadratureUnderresolved { samples: usize },

    #[error("regularization width {width:.3e} exceeds half the tube radius {half_tube:.3e}")]
    TubeTooNarrow { width: f64, half_tube: f64 },

    #[error("tube degenerate: 1 + d*kappa = {factor:.3e} at ({x}, {y})")]
    TubeDegenerate { factor: f64, x: f64, y: f64 },

    #[error("test function support leaves the tube (reach {reach:.3e} >= tube radius {eps:.3e})")]
    SupportViolation { reach: f64, eps: f64 },

    #[error("conjugate gradient stopped after {} iterations at relative residual {:.3e}", .best.1.iterations, .best.1.relative_residual)]
    MaxIterExceeded { best: Box<(GridField, SolveReport)> },

    #[error("cascade order {m} unsupported (1..=4)")]
    OrderUnsupported { m: usize },

    #[error("quadrature tolerance not met: {what} (residual {residual:.3e})")]
    QuadratureTolNotMet { what: String, residual: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("singular 6x6 system at rho = {rho}")]
    SingularSystem { rho: f64 },

    #[error("sign pattern violated at rho = {rho}: {detail}")]
    SignPatternViolated { rho: f64, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
