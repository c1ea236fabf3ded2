//! Adaptive dynamic relaxation.
//!
//! Quasi-static equilibrium is reached by integrating a damped fictitious
//! dynamics `λ ü + c λ u̇ = F + b` with central differences. The diagonal
//! density `λ` is chosen from the reference stiffness so the scheme is stable
//! at `Δt = 1`, and the damping `c` follows a Rayleigh quotient of the
//! current local stiffness.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{SetupError, SolverError};
use crate::implicit::{assemble_jacobian, TangentKind};
use crate::loading::LoadFraction;
use crate::mechanics::{internal_force_into, update_damage_history, DamageEvents, SystemState};
use crate::model::Model;

/// Fictitious density per DOF: `¼Δt²` times the absolute row sum of the
/// reference stiffness. Constrained DOFs get 0.
pub fn fictitious_density(model: &Model, dt: f64) -> Result<Vec<f64>, SetupError> {
    let reference = SystemState::new(model);
    let k = assemble_jacobian(model, &reference, TangentKind::Consistent)
        .expect("reference configuration has no coincident particles");
    let dim = model.dim();
    let mut lambda = k.matrix.row_abs_sums();
    for (d, l) in lambda.iter_mut().enumerate() {
        if model.constrained[d] {
            *l = 0.0;
            continue;
        }
        *l *= 0.25 * dt * dt;
        if !(*l > 0.0) {
            return Err(SetupError::IsolatedParticle(d / dim));
        }
    }
    Ok(lambda)
}

/// Rayleigh-quotient damping `c = 2 √(uᵀ κ u / uᵀ u)` with the local
/// stiffness estimate `κ_d = −(F_d − F_prev_d)/(λ_d Δt u̇_d)`.
///
/// DOFs with `|u̇| < 1e-30` are left out; the result is clamped to `[0, 2/Δt)`.
pub fn damping_coefficient(u: &[f64], velocity: &[f64], force: &[f64], prev_force: &[f64], lambda: &[f64], dt: f64) -> f64 {
    rayleigh_damping(0..u.len(), u, velocity, force, prev_force, lambda, dt)
}

fn rayleigh_damping(
    dofs: impl Iterator<Item = usize>,
    u: &[f64],
    velocity: &[f64],
    force: &[f64],
    prev_force: &[f64],
    lambda: &[f64],
    dt: f64,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for d in dofs {
        let uu = u[d] * u[d];
        den += uu;
        if velocity[d].abs() < 1e-30 || lambda[d] == 0.0 {
            continue;
        }
        let kappa = -(force[d] - prev_force[d]) / (lambda[d] * dt * velocity[d]);
        num += uu * kappa;
    }
    if den == 0.0 || !(num > 0.0) {
        return 0.0;
    }
    let c = 2.0 * (num / den).sqrt();
    // Largest double below 2/Δt keeps (2 − cΔt) non-negative.
    let cap = f64::from_bits((2.0 / dt).to_bits() - 1);
    if c.is_finite() {
        c.min(cap)
    } else {
        cap
    }
}

/// `‖u_n − u_{n−1}‖ / ‖u_{n−1}‖`, with `0/0 = 0`.
pub fn relative_change(previous: &[f64], current: &[f64]) -> f64 {
    let diff: f64 = previous.iter().zip(current).map(|(a, b)| (b - a) * (b - a)).sum();
    let base: f64 = previous.iter().map(|a| a * a).sum();
    if diff == 0.0 {
        0.0
    } else if base == 0.0 {
        f64::INFINITY
    } else {
        (diff / base).sqrt()
    }
}

/// Integrator state carried between relaxation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdrState {
    pub velocity: Vec<f64>,
    pub prev_force: Vec<f64>,
    pub density: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub last_damping: f64,
    free: Vec<usize>,
    force: Vec<f64>,
}

impl AdrState {
    pub fn new(model: &Model, dt: f64) -> Result<Self, SetupError> {
        let density = fictitious_density(model, dt)?;
        let n = model.num_dofs();
        Ok(Self {
            velocity: vec![0.0; n],
            prev_force: vec![0.0; n],
            density,
            dt,
            steps: 0,
            last_damping: 0.0,
            free: model.free_dofs(),
            force: vec![0.0; n],
        })
    }
}

/// One central-difference step at the load installed in `state`.
///
/// Constrained DOFs are left at their prescriptions; the damage history is
/// advanced after the update.
pub fn adr_step(model: &Model, state: &mut SystemState, adr: &mut AdrState) -> Result<DamageEvents, SolverError> {
    state.enforce_constraints(model);
    internal_force_into(model, state, &mut adr.force)?;
    let dt = adr.dt;
    if adr.steps == 0 {
        for &d in &adr.free {
            let r = adr.force[d] + state.body_force[d];
            adr.velocity[d] = 0.5 * dt * r / adr.density[d];
        }
        adr.last_damping = 0.0;
    } else {
        let c = rayleigh_damping(
            adr.free.iter().copied(),
            &state.displacement,
            &adr.velocity,
            &adr.force,
            &adr.prev_force,
            &adr.density,
            dt,
        );
        adr.last_damping = c;
        for &d in &adr.free {
            let r = adr.force[d] + state.body_force[d];
            adr.velocity[d] = ((2.0 - c * dt) * adr.velocity[d] + 2.0 * dt * r / adr.density[d]) / (2.0 + c * dt);
        }
    }
    for &d in &adr.free {
        state.displacement[d] += dt * adr.velocity[d];
    }
    std::mem::swap(&mut adr.prev_force, &mut adr.force);
    adr.steps += 1;
    Ok(update_damage_history(model, state)?)
}

/// Relaxation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdrConfig {
    /// Whole-field displacement tolerance `e₀`.
    pub tolerance: f64,
    pub max_steps: usize,
    #[serde(default = "unit_step")]
    pub dt: f64,
}

fn unit_step() -> f64 {
    1.0
}

impl Default for AdrConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_steps: 1_000_000,
            dt: 1.0,
        }
    }
}

/// Load ramp: step `k ≤ steps` applies `from + (to − from)·k/steps`, later steps hold `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadProgram {
    pub from: LoadFraction,
    pub to: LoadFraction,
    pub steps: u64,
}

impl LoadProgram {
    /// Full load from the first step.
    pub fn immediate() -> Self {
        Self {
            from: LoadFraction::ZERO,
            to: LoadFraction::ONE,
            steps: 0,
        }
    }

    pub fn ramp(steps: u64) -> Self {
        Self {
            from: LoadFraction::ZERO,
            to: LoadFraction::ONE,
            steps,
        }
    }

    pub fn level(&self, step: u64) -> LoadFraction {
        if step >= self.steps {
            self.to
        } else {
            self.from.lerp(self.to, step, self.steps)
        }
    }
}

/// Summary of a relaxation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdrReport {
    pub steps: usize,
    pub loading_steps: u64,
    pub converged: bool,
    pub final_e_u: f64,
    /// `e_u` after every step.
    pub trace: Vec<f64>,
    pub entered_band: usize,
    pub failed: usize,
    pub seconds: f64,
}

/// Relaxes under `program` until `e_u < e₀` after the ramp, or the step budget runs out.
pub fn run_to_convergence(
    model: &Model,
    state: &mut SystemState,
    program: &LoadProgram,
    cfg: &AdrConfig,
) -> Result<AdrReport, SolverError> {
    let start = Instant::now();
    let mut adr = AdrState::new(model, cfg.dt).map_err(|e| SolverError::Singular(e.to_string()))?;
    let mut report = AdrReport {
        loading_steps: program.steps,
        final_e_u: f64::INFINITY,
        ..Default::default()
    };
    let mut previous = state.displacement.clone();
    let mut applied = None;
    for step in 1..=cfg.max_steps as u64 {
        let level = program.level(step);
        if applied != Some(level) {
            state.apply_load(model, &model.load_at(level.value()));
            applied = Some(level);
        }
        let events = adr_step(model, state, &mut adr)?;
        report.entered_band += events.entered_band;
        report.failed += events.failed;
        let e_u = relative_change(&previous, &state.displacement);
        previous.copy_from_slice(&state.displacement);
        report.trace.push(e_u);
        report.steps += 1;
        report.final_e_u = e_u;
        if step >= program.steps && e_u < cfg.tolerance {
            report.converged = true;
            break;
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryLayer, GeometrySpec, LayerRole, Side};
    use crate::material::{DimensionMode, MaterialParams};

    /// One free particle tied to one fixed particle: a single spring.
    fn spring(force: f64) -> (Model, f64) {
        let spec = GeometrySpec {
            boundaries: vec![
                BoundaryLayer::side(Side::Left, 1, LayerRole::Constrained),
                BoundaryLayer::side(Side::Right, 1, LayerRole::Load).with_body_force([force, 0.0, 0.0]),
            ],
            ..GeometrySpec::lattice(1, [1, 1, 1], 1.0)
        };
        let mat = MaterialParams {
            youngs_modulus: 3.0,
            density: 1.0,
            mode: DimensionMode::OneD,
            thickness: None,
            area: Some(1.0),
            horizon: 1.2,
        };
        let m = Model::build(&spec, &mat, None).unwrap();
        let k = m.coeff[0];
        (m, k)
    }

    #[test]
    fn density_of_a_single_bond() {
        let (m, k) = spring(0.0);
        let lambda = fictitious_density(&m, 1.0).unwrap();
        let free = m.free_dofs();
        assert_eq!(free.len(), 1);
        assert!((lambda[free[0]] - 0.25 * 2.0 * k).abs() < 1e-15 * k);
    }

    #[test]
    fn density_is_linear_in_the_bond_constant() {
        let spec = GeometrySpec::lattice(2, [5, 3, 1], 0.01);
        let mut mat = MaterialParams {
            youngs_modulus: 1e9,
            density: 1.0,
            mode: DimensionMode::PlaneStress,
            thickness: None,
            area: None,
            horizon: 0.03015,
        };
        let a = fictitious_density(&Model::build(&spec, &mat, None).unwrap(), 1.0).unwrap();
        mat.youngs_modulus *= 2.0;
        let b = fictitious_density(&Model::build(&spec, &mat, None).unwrap(), 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(*x > 0.0);
            assert!((2.0 * x - y).abs() <= 1e-14 * y);
        }
    }

    #[test]
    fn damping_degenerate_inputs() {
        assert_eq!(damping_coefficient(&[0.0], &[1.0], &[1.0], &[0.0], &[1.0], 1.0), 0.0);
        // Force grows along the velocity: negative stiffness estimate.
        assert_eq!(damping_coefficient(&[1.0], &[1.0], &[2.0], &[1.0], &[1.0], 1.0), 0.0);
    }

    #[test]
    fn damping_of_a_linear_spring() {
        let (k, lambda, v) = (3.0, 12.0, 0.01);
        // One step of velocity v changes the spring force by −k·v.
        let c = damping_coefficient(&[0.5], &[v], &[-k * (0.5)], &[-k * (0.5 - v)], &[lambda], 1.0);
        let analytic = 2.0 * (k / lambda).sqrt();
        assert!((c - analytic).abs() < 0.05 * analytic);
        let stiff = damping_coefficient(&[0.5], &[v], &[-k * 0.5], &[-k * (0.5 - v)], &[k / 2.0], 1.0);
        assert!(stiff < 2.0 && stiff > 1.99);
    }

    #[test]
    fn relative_change_examples() {
        let e = relative_change(&[1.0, 1.0], &[1.0, 1.0001]);
        assert!((e - 1e-4 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(relative_change(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let a = [0.3, -1.2, 4.0];
        let b = [0.31, -1.25, 4.1];
        let scaled = |v: &[f64]| v.iter().map(|x| 7.5 * x).collect::<Vec<_>>();
        assert!((relative_change(&a, &b) - relative_change(&scaled(&a), &scaled(&b))).abs() < 1e-15);
    }

    #[test]
    fn spring_relaxes_to_static_solution() {
        let f = 2.0;
        let (m, k) = spring(f);
        let mut st = SystemState::new(&m);
        let report = run_to_convergence(&m, &mut st, &LoadProgram::immediate(), &AdrConfig::default()).unwrap();
        assert!(report.converged);
        let free = m.free_dofs()[0];
        // Body force density acts on the particle volume; the bond force is per unit volume too.
        let expected = f / k;
        assert!((st.displacement[free] - expected).abs() < 1e-3 * expected);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (m, _) = spring(0.0);
        let mut st = SystemState::new(&m);
        let mut adr = AdrState::new(&m, 1.0).unwrap();
        let before = st.clone();
        adr_step(&m, &mut st, &mut adr).unwrap();
        assert_eq!(st, before);
        let report = run_to_convergence(&m, &mut st, &LoadProgram::immediate(), &AdrConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.steps, 1);
    }

    #[test]
    fn rigid_translation_of_constraints() {
        let shift = [1e-3, -2e-3, 0.0];
        let spec = GeometrySpec {
            boundaries: vec![
                BoundaryLayer::side(Side::Left, 3, LayerRole::Constrained).with_displacement(shift),
                BoundaryLayer::side(Side::Right, 3, LayerRole::Constrained).with_displacement(shift),
            ],
            ..GeometrySpec::lattice(2, [6, 3, 1], 0.01)
        };
        let mat = MaterialParams {
            youngs_modulus: 1e9,
            density: 1.0,
            mode: DimensionMode::PlaneStress,
            thickness: None,
            area: None,
            horizon: 0.03015,
        };
        let m = Model::build(&spec, &mat, None).unwrap();
        let mut st = SystemState::new(&m);
        let cfg = AdrConfig {
            tolerance: 1e-12,
            max_steps: 100_000,
            dt: 1.0,
        };
        let report = run_to_convergence(&m, &mut st, &LoadProgram::ramp(10), &cfg).unwrap();
        assert!(report.converged, "e_u = {}", report.final_e_u);
        for i in 0..m.num_particles() {
            for a in 0..2 {
                assert!((st.displacement[2 * i + a] - shift[a]).abs() < 1e-8 * shift[a].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn ramp_levels() {
        let p = LoadProgram::ramp(4);
        assert_eq!(p.level(2), LoadFraction::new(1, 2));
        assert_eq!(p.level(4), LoadFraction::ONE);
        assert_eq!(p.level(9), LoadFraction::ONE);
        assert_eq!(LoadProgram::immediate().level(1), LoadFraction::ONE);
    }
}
