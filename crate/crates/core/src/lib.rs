//! Bond-based peridynamics for quasi-static deformation and fracture.
//!
//! The crate offers three solution strategies over one discrete model:
//! Newton–Raphson on an analytical sparse tangent ([`implicit`]), adaptive
//! dynamic relaxation ([`adr`]), and an adaptive driver that switches
//! between them around the onset of damage ([`adaptive`]).

pub mod adaptive;
pub mod adr;
pub mod cg;
pub mod error;
pub mod export;
pub mod geometry;
pub mod horizon;
pub mod implicit;
pub mod loading;
pub mod material;
pub mod mechanics;
pub mod model;
pub mod scenario;
pub mod sparse;

pub use error::{MechanicsError, ScenarioError, SetupError, SolverError};
pub use geometry::{BoundaryLayer, GeometrySpec, Hole, LayerRole, Notch, ParticleSet, Role, Side};
pub use loading::LoadFraction;
pub use material::{DamageLaw, DimensionMode, MaterialParams};
pub use mechanics::SystemState;
pub use model::Model;
