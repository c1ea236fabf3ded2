//! Error types shared across the crate.

use thiserror::Error;

/// Problems detected while building a discrete model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetupError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("holes remove every particle of the domain")]
    EmptyDomain,
    #[error("boundary layers {first} and {second} overlap")]
    OverlappingLayers { first: usize, second: usize },
    #[error("horizon {horizon} m does not exceed grid spacing {spacing} m")]
    HorizonTooSmall { horizon: f64, spacing: f64 },
    #[error("material parameter error: {0}")]
    Material(String),
    #[error("particle {0} is solved for but has no bonds")]
    IsolatedParticle(usize),
    #[error("empty particle set")]
    EmptyParticleSet,
}

/// Failures while evaluating bond quantities.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanicsError {
    #[error("bond {i}-{j} has coincident deformed end points")]
    SingularBond { i: usize, j: usize },
    #[error("non-finite force on particle {particle}")]
    NonFiniteForce { particle: usize },
}

/// Failures of the linear and nonlinear solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error("every degree of freedom is constrained; nothing to solve")]
    NothingToSolve,
    #[error("system is singular: {0}")]
    Singular(String),
    #[error("indefinite matrix: curvature {curvature:e} at CG iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Newton iteration diverged after {iterations} iterations (relative residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("Newton iteration hit the cap of {iterations} iterations (relative residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("load step failed after {halvings} increment halvings: {source}")]
    StepFailed {
        halvings: usize,
        #[source]
        source: Box<SolverError>,
    },
}

/// Scenario parsing, validation, and IO failures.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown built-in scenario `{0}`")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("scenario `{scenario}`: {source}")]
    Solver {
        scenario: String,
        #[source]
        source: SolverError,
    },
}
