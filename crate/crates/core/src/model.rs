//! A fully assembled discrete model: particles, bonds, material, and boundary data.

use crate::error::SetupError;
use crate::geometry::{build_grid, BoundaryLayer, GeometrySpec, ParticleSet, Role, Vec3};
use crate::horizon::{apply_notches, build_horizons, correction_factors, HorizonTable, SurfacePolicy};
use crate::material::{DamageLaw, MaterialParams};
use crate::sparse::BlockPattern;

/// Everything the solvers need to evaluate forces and tangents.
///
/// Per directed bond entry `e` (see [`HorizonTable`]) the model caches the
/// reference vector `ξ = x_j − x_i` and the coefficient `c·μ·ν·V_j`.
#[derive(Debug, Clone)]
pub struct Model {
    pub particles: ParticleSet,
    pub horizons: HorizonTable,
    pub material: MaterialParams,
    pub bond_constant: f64,
    pub damage: Option<DamageLaw>,
    pub boundaries: Vec<BoundaryLayer>,
    /// Per degree of freedom (`particle * dim + axis`).
    pub constrained: Vec<bool>,
    pub xi: Vec<Vec3>,
    pub coeff: Vec<f64>,
    /// Sparsity layout of the tangent.
    pub pattern: BlockPattern,
}

impl Model {
    /// Builds particles and bonds from a geometry description with horizon
    /// `material.horizon`.
    pub fn build(
        spec: &GeometrySpec,
        material: &MaterialParams,
        damage: Option<DamageLaw>,
    ) -> Result<Model, SetupError> {
        let material = material.clone().resolved(spec.spacing_m);
        let particles = build_grid(spec, &material)?;
        let table = build_horizons(&particles, material.horizon)?;
        let table = apply_notches(table, &particles, &spec.notches);
        let table = correction_factors(table, SurfacePolicy::default());
        Model::from_parts(particles, table, material, damage, spec.boundaries.clone())
    }

    pub fn from_parts(
        particles: ParticleSet,
        horizons: HorizonTable,
        material: MaterialParams,
        damage: Option<DamageLaw>,
        boundaries: Vec<BoundaryLayer>,
    ) -> Result<Model, SetupError> {
        let material = material.resolved(particles.spacing);
        if material.mode.dimension() != particles.dim {
            return Err(SetupError::Material(format!(
                "{:?} does not match a {}D grid",
                material.mode, particles.dim
            )));
        }
        if let Some(law) = &damage {
            law.validate()?;
        }
        let c = material.bond_constant()?;
        let dim = particles.dim;
        let mut constrained = vec![false; particles.len() * dim];
        for (i, role) in particles.roles.iter().enumerate() {
            if *role == Role::Constrained {
                let axes = particles.groups[i]
                    .and_then(|g| boundaries.get(g))
                    .map(|b| b.axes)
                    .unwrap_or([true; 3]);
                for a in 0..dim {
                    constrained[i * dim + a] = axes[a];
                }
            }
        }
        let mut xi = Vec::with_capacity(horizons.neighbors.len());
        let mut coeff = Vec::with_capacity(horizons.neighbors.len());
        for i in 0..particles.len() {
            let x = particles.positions[i];
            for e in horizons.range(i) {
                let j = horizons.neighbors[e];
                let y = particles.positions[j];
                xi.push([y[0] - x[0], y[1] - x[1], y[2] - x[2]]);
                coeff.push(
                    c * horizons.surface_correction[e]
                        * horizons.volume_correction[e]
                        * particles.volumes[j],
                );
            }
        }
        let pattern = BlockPattern::new(&horizons, dim);
        Ok(Model {
            pattern,
            particles,
            horizons,
            material,
            bond_constant: c,
            damage,
            boundaries,
            constrained,
            xi,
            coeff,
        })
    }

    pub fn dim(&self) -> usize {
        self.particles.dim
    }

    pub fn num_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.particles.len() * self.particles.dim
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs()).filter(|&d| !self.constrained[d]).collect()
    }

    /// Prescribed displacements and body forces at `fraction` of the full load.
    pub fn load_at(&self, fraction: f64) -> LoadState {
        let dim = self.dim();
        let mut prescribed = vec![0.0; self.num_dofs()];
        let mut body_force = vec![0.0; self.num_dofs()];
        for (i, g) in self.particles.groups.iter().enumerate() {
            let Some(b) = g.and_then(|g| self.boundaries.get(g)) else {
                continue;
            };
            for a in 0..dim {
                match self.particles.roles[i] {
                    Role::Constrained => prescribed[i * dim + a] = fraction * b.displacement_m[a],
                    Role::Load => body_force[i * dim + a] = fraction * b.body_force_n_per_m3[a],
                    Role::Real => {}
                }
            }
        }
        LoadState {
            prescribed,
            body_force,
        }
    }

    /// True when at least one constraint or body force is non-zero at full load.
    pub fn is_force_driven(&self) -> bool {
        self.load_at(1.0).body_force.iter().any(|&b| b != 0.0)
    }
}

/// Boundary data for one load level.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadState {
    pub prescribed: Vec<f64>,
    pub body_force: Vec<f64>,
}
