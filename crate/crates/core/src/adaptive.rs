//! The adaptive implicit/explicit driver and the single-method runners.
//!
//! An adaptive run has three phases:
//!
//! 1. Newton load steps of `1/N_i` of the total load until some bond stretch
//!    exceeds the damage onset `s_m` (the triggering step is kept). A step
//!    whose Newton iteration fails while its linear predictor already passes
//!    `s_m` is handed to phase 2 whole;
//! 2. dynamic relaxation that applies the remaining load over `N_e` steps
//!    and keeps relaxing until no bond has entered the softening band or
//!    failed for `W` consecutive steps;
//! 3. a final Newton equilibration at full load.
//!
//! When phase 1 reaches the full load without damage, phase 2 is skipped and
//! the run is identical to a pure implicit run.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adr::{adr_step, run_to_convergence, relative_change, AdrConfig, AdrState, LoadProgram};
use crate::error::{MechanicsError, SolverError};
use crate::implicit::{advance_implicit, linear_predictor, newton_load_step, NewtonConfig};
use crate::loading::LoadFraction;
use crate::mechanics::{bond_stretches, update_damage_history, DamageEvents, SystemState};
use crate::model::Model;

/// True when an alive bond is currently stretched beyond the damage onset.
pub fn detect_switch_to_explicit(model: &Model, state: &SystemState) -> Result<bool, MechanicsError> {
    let Some(law) = &model.damage else {
        return Ok(false);
    };
    let s = bond_stretches(model, state)?;
    Ok(s
        .iter()
        .zip(&model.horizons.alive)
        .any(|(&s, &alive)| alive && s > law.onset_stretch))
}

/// True when the last `window` relaxation steps saw no bond enter the
/// softening band or fail. `recent` lists the newest steps last.
pub fn detect_switch_to_implicit(recent: &[DamageEvents], window: usize) -> bool {
    recent.len() >= window && recent[recent.len() - window..].iter().all(|e| !e.any())
}

/// Step budgets and solver settings of an adaptive run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Implicit step budget `N_i`.
    pub implicit_steps: u64,
    /// Explicit loading steps `N_e` for the load left after phase 1.
    pub explicit_steps: u64,
    /// Quiet steps `W` required before returning to the implicit solver.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub adr: AdrConfig,
}

fn default_window() -> usize {
    500
}

fn default_halvings() -> usize {
    4
}

impl AdaptiveConfig {
    pub fn new(implicit_steps: u64, explicit_steps: u64) -> Self {
        Self {
            implicit_steps,
            explicit_steps,
            window: default_window(),
            max_halvings: default_halvings(),
            newton: NewtonConfig::default(),
            adr: AdrConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.implicit_steps == 0 || self.explicit_steps == 0 {
            return Err("N_i and N_e must be at least 1".into());
        }
        self.newton.validate()
    }
}

/// Which portion of the load each phase applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadAccounting {
    /// Implicit steps taken, `n`.
    pub implicit_steps: u64,
    pub implicit_budget: u64,
    /// Explicit loading steps, `N_e` (0 when phase 2 was skipped).
    pub explicit_steps: u64,
    /// Per-step implicit increment `1/N_i`.
    pub implicit_increment: LoadFraction,
    /// Per-step explicit increment `(1 − n/N_i)/N_e`.
    pub explicit_increment: LoadFraction,
}

impl LoadAccounting {
    /// `n·Δu_i + N_e·Δu_e` as a fraction of the total load.
    pub fn applied(&self) -> LoadFraction {
        self.implicit_increment
            .scale(self.implicit_steps, 1)
            .add(self.explicit_increment.scale(self.explicit_steps, 1))
    }

    pub fn identity_holds(&self) -> bool {
        self.applied().is_one()
    }
}

/// Solver wall time per phase, setup excluded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeconds {
    pub deformation: f64,
    pub damage: f64,
    pub final_equilibrium: f64,
}

impl PhaseSeconds {
    pub fn total(&self) -> f64 {
        self.deformation + self.damage + self.final_equilibrium
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adr,
    Implicit,
    Adaptive,
}

/// Outcome of any solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub converged: bool,
    /// Newton load steps taken before damage (all steps for implicit runs).
    pub implicit_steps: u64,
    pub explicit_steps: usize,
    /// Newton iterations of the final equilibration.
    pub final_iterations: usize,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub secant_fallbacks: usize,
    pub halvings: usize,
    pub seconds: PhaseSeconds,
    pub setup_seconds: f64,
    /// Bonds whose history passed the onset stretch.
    pub damaged_bonds: usize,
    /// Bonds whose history reached the critical stretch.
    pub broken_bonds: usize,
    /// Final relative residual (implicit) or `e_u` (explicit).
    pub final_error: f64,
    pub load: Option<LoadAccounting>,
    /// Explicit reference time used for `r_a`.
    pub reference_seconds: Option<f64>,
    pub r_a: Option<f64>,
    pub r_n_time: Option<f64>,
    pub r_n_steps: Option<f64>,
    /// `e_u` after every relaxation step.
    pub trace: Vec<f64>,
    /// True when the final state lives on the fracture-phase bond family.
    pub fracture_model_used: bool,
}

impl RunReport {
    fn new(method: Method) -> Self {
        Self {
            method,
            converged: false,
            implicit_steps: 0,
            explicit_steps: 0,
            final_iterations: 0,
            newton_iterations: 0,
            cg_iterations: 0,
            secant_fallbacks: 0,
            halvings: 0,
            seconds: PhaseSeconds::default(),
            setup_seconds: 0.0,
            damaged_bonds: 0,
            broken_bonds: 0,
            final_error: f64::NAN,
            load: None,
            reference_seconds: None,
            r_a: None,
            r_n_time: None,
            r_n_steps: None,
            trace: Vec::new(),
            fracture_model_used: false,
        }
    }

    fn tally_damage(&mut self, model: &Model, state: &SystemState) {
        if let Some(law) = &model.damage {
            self.damaged_bonds = state.max_stretch.iter().filter(|&&s| s > law.onset_stretch).count();
            self.broken_bonds = state.max_stretch.iter().filter(|&&s| s >= law.critical_stretch).count();
        }
    }
}

/// Fills `r_n` (time and step variants) and, given an explicit reference
/// time, `r_a = reference / adaptive`.
pub fn compute_metrics(report: &mut RunReport, reference_seconds: Option<f64>) {
    let total = report.seconds.total();
    report.r_n_time = Some(if total > 0.0 {
        report.seconds.deformation / total
    } else {
        1.0
    });
    let steps = report.implicit_steps as f64 + report.explicit_steps as f64 + if report.explicit_steps > 0 { 1.0 } else { 0.0 };
    report.r_n_steps = Some(if steps > 0.0 {
        report.implicit_steps as f64 / steps
    } else {
        1.0
    });
    report.reference_seconds = reference_seconds;
    report.r_a = reference_seconds.filter(|_| total > 0.0).map(|r| r / total);
}

/// Bond families for the two halves of an adaptive run. Both models must
/// share the particle set; only horizons may differ.
#[derive(Debug, Clone, Copy)]
pub struct PhaseModels<'a> {
    pub deformation: &'a Model,
    pub fracture: &'a Model,
}

impl<'a> PhaseModels<'a> {
    pub fn single(model: &'a Model) -> Self {
        Self {
            deformation: model,
            fracture: model,
        }
    }

    fn split(&self) -> bool {
        !std::ptr::eq(self.deformation, self.fracture)
    }
}

/// Moves displacements onto another bond family; its history starts from the
/// transferred configuration.
pub fn transfer_state(from: &SystemState, to_model: &Model) -> Result<SystemState, MechanicsError> {
    let mut st = SystemState::new(to_model);
    st.displacement.clone_from(&from.displacement);
    st.body_force.clone_from(&from.body_force);
    st.prescribed.clone_from(&from.prescribed);
    update_damage_history(to_model, &mut st)?;
    Ok(st)
}

/// Newton load steps of `1/steps` each, from zero to full load.
pub fn run_implicit(
    model: &Model,
    state: &mut SystemState,
    steps: u64,
    cfg: &NewtonConfig,
    max_halvings: usize,
) -> Result<RunReport, SolverError> {
    let start = Instant::now();
    let mut report = RunReport::new(Method::Implicit);
    let mut level = LoadFraction::ZERO;
    for k in 1..=steps {
        let next = LoadFraction::new(k, steps);
        let inc = advance_implicit(model, state, level, next, cfg, max_halvings)?;
        absorb(&mut report, &inc);
        level = next;
    }
    report.implicit_steps = steps;
    report.converged = true;
    report.seconds.deformation = start.elapsed().as_secs_f64();
    report.tally_damage(model, state);
    Ok(report)
}

fn absorb(report: &mut RunReport, inc: &crate::implicit::IncrementReport) {
    report.newton_iterations += inc.newton_iterations;
    report.cg_iterations += inc.cg_iterations;
    report.secant_fallbacks += inc.secant_fallbacks;
    report.halvings += inc.halvings;
    if let Some(&r) = inc.residuals.last() {
        report.final_error = r;
    }
}

/// Dynamic relaxation under `program` until `e_u < e₀`.
pub fn run_explicit(
    model: &Model,
    state: &mut SystemState,
    program: &LoadProgram,
    cfg: &AdrConfig,
) -> Result<RunReport, SolverError> {
    let adr = run_to_convergence(model, state, program, cfg)?;
    let mut report = RunReport::new(Method::Adr);
    report.converged = adr.converged;
    report.explicit_steps = adr.steps;
    report.final_error = adr.final_e_u;
    report.seconds.damage = adr.seconds;
    report.trace = adr.trace;
    report.tally_damage(model, state);
    Ok(report)
}

/// Runs the three-phase adaptive method from the unloaded state.
///
/// Returns the final state, which belongs to `models.fracture` when
/// `report.fracture_model_used` is set and to `models.deformation` otherwise.
pub fn run_adaptive(models: PhaseModels<'_>, cfg: &AdaptiveConfig) -> Result<(SystemState, RunReport), SolverError> {
    let mut report = RunReport::new(Method::Adaptive);
    let ni = cfg.implicit_steps;
    let ne = cfg.explicit_steps;
    let model = models.deformation;

    // Phase 1.
    let clock = Instant::now();
    let mut state = SystemState::new(model);
    let mut level = LoadFraction::ZERO;
    let mut damaged = false;
    let mut n = 0;
    let plain = NewtonConfig {
        rescue_iterations: 0,
        ..cfg.newton
    };
    while n < ni {
        let next = LoadFraction::new(n + 1, ni);
        let mut trial = state.clone();
        trial.install_load(&model.load_at(next.value()));
        match newton_load_step(model, &mut trial, &plain) {
            Ok(r) => {
                state = trial;
                report.newton_iterations += r.iterations;
                report.cg_iterations += r.cg_iterations;
                report.secant_fallbacks += r.secant_fallbacks;
                report.final_error = r.final_residual();
            }
            Err(SolverError::Diverged { .. } | SolverError::MaxIterations { .. }) => {
                let mut probe = state.clone();
                probe.install_load(&model.load_at(next.value()));
                if detect_switch_to_explicit(model, &linear_predictor(model, &probe, &cfg.newton)?)? {
                    // Damage starts inside this step; relaxation takes the whole of it.
                    damaged = true;
                    break;
                }
                let inc = advance_implicit(model, &mut state, level, next, &cfg.newton, cfg.max_halvings)?;
                absorb(&mut report, &inc);
            }
            Err(e) => return Err(e),
        }
        level = next;
        n += 1;
        if detect_switch_to_explicit(model, &state)? {
            damaged = true;
            break;
        }
    }
    report.implicit_steps = n;
    report.seconds.deformation = clock.elapsed().as_secs_f64();

    if !damaged {
        // Full load reached without damage; the final equilibration is part of this phase.
        let clock = Instant::now();
        let r = newton_load_step(model, &mut state, &cfg.newton)?;
        report.final_iterations = r.iterations;
        report.newton_iterations += r.iterations;
        report.final_error = r.final_residual();
        report.seconds.deformation += clock.elapsed().as_secs_f64();
        report.load = Some(LoadAccounting {
            implicit_steps: n,
            implicit_budget: ni,
            explicit_steps: 0,
            implicit_increment: LoadFraction::new(1, ni),
            explicit_increment: LoadFraction::ZERO,
        });
        report.converged = true;
        report.tally_damage(model, &state);
        compute_metrics(&mut report, None);
        return Ok((state, report));
    }

    // Phase 2.
    let clock = Instant::now();
    let model = models.fracture;
    if models.split() {
        state = transfer_state(&state, model)?;
        report.fracture_model_used = true;
    }
    let accounting = LoadAccounting {
        implicit_steps: n,
        implicit_budget: ni,
        explicit_steps: ne,
        implicit_increment: LoadFraction::new(1, ni),
        explicit_increment: LoadFraction::ONE.sub(level).scale(1, ne),
    };
    report.load = Some(accounting);
    let program = LoadProgram {
        from: level,
        to: LoadFraction::ONE,
        steps: ne,
    };
    let mut adr = AdrState::new(model, cfg.adr.dt).map_err(|e| SolverError::Singular(e.to_string()))?;
    let mut recent: VecDeque<DamageEvents> = VecDeque::with_capacity(cfg.window + 1);
    let mut previous = state.displacement.clone();
    let mut applied = None;
    let mut quiet = false;
    for step in 1..=cfg.adr.max_steps as u64 {
        let target = program.level(step);
        if applied != Some(target) {
            state.apply_load(model, &model.load_at(target.value()));
            applied = Some(target);
        }
        let events = adr_step(model, &mut state, &mut adr)?;
        report.trace.push(relative_change(&previous, &state.displacement));
        previous.copy_from_slice(&state.displacement);
        report.explicit_steps += 1;
        recent.push_back(events);
        if recent.len() > cfg.window {
            recent.pop_front();
        }
        if step >= ne && detect_switch_to_implicit(recent.make_contiguous(), cfg.window) {
            quiet = true;
            break;
        }
    }
    report.seconds.damage = clock.elapsed().as_secs_f64();
    if !quiet {
        report.final_error = report.trace.last().copied().unwrap_or(f64::NAN);
        report.tally_damage(model, &state);
        compute_metrics(&mut report, None);
        return Ok((state, report));
    }

    // Phase 3.
    let clock = Instant::now();
    let saved = state.clone();
    match newton_load_step(model, &mut state, &cfg.newton) {
        Ok(r) => {
            report.final_iterations = r.iterations;
            report.newton_iterations += r.iterations;
            report.cg_iterations += r.cg_iterations;
            report.secant_fallbacks += r.secant_fallbacks;
            report.final_error = r.final_residual();
            report.converged = true;
        }
        Err(SolverError::Diverged { .. } | SolverError::MaxIterations { .. }) => {
            // Newton could not settle the softened state; finish by relaxation.
            state = saved;
            let adr = run_to_convergence(model, &mut state, &LoadProgram::immediate(), &cfg.adr)?;
            report.explicit_steps += adr.steps;
            report.trace.extend(adr.trace);
            report.final_error = adr.final_e_u;
            report.converged = adr.converged;
        }
        Err(e) => return Err(e),
    }
    report.seconds.final_equilibrium = clock.elapsed().as_secs_f64();
    report.tally_damage(model, &state);
    compute_metrics(&mut report, None);
    Ok((state, report))
}
