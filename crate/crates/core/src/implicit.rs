//! Newton–Raphson equilibrium solver with an analytical sparse tangent.
//!
//! The tangent is `K = ∂F/∂u` of the assembled internal force. For a bond
//! `i → j` with `y = y_j − y_i` and `P = c·μ·ν·V_j` the off-diagonal block is
//!
//! ```text
//! ∂F_ip/∂u_jq = P [ T·a·δ_pq + (T/|y|³ + L·a/(|x||y|)) · y_p y_q ],   a = 1/|x| − 1/|y|
//! ```
//!
//! where `T` is the degradation factor and `L = dT/ds`. The slope term
//! multiplies the scalar `a`, not `a·δ_pq`; this is the form that agrees with
//! finite differences of the force. Diagonal blocks are the negated row sums
//! of the off-diagonal blocks, so `K` annihilates rigid translations.
//!
//! Each bond block has the transverse eigenvalue `P·T·a` and the axial
//! eigenvalue `P/|x|·(T + L·s)`. While bonds are stretched and not softening
//! both are non-negative and `−K` is positive semi-definite. Newton updates
//! solve `(−K) Δu = F + b` on the unconstrained DOFs with conjugate
//! gradients; when CG meets negative curvature the step is retried with the
//! clipped tangent, whose bond blocks keep only non-negative eigenvalues.

use serde::{Deserialize, Serialize};

use crate::cg::cg_solve;
use crate::error::{MechanicsError, SolverError};
use crate::loading::LoadFraction;
use crate::mechanics::{
    degradation_at, internal_force_into, kinematics, potential_energy, update_damage_history, DamageEvents, SystemState,
};
use crate::model::Model;
use crate::sparse::CsrMatrix;

/// Newton and inner CG settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    /// Relative residual tolerance `e`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
    /// Iteration budget of the regularized retry after plain Newton fails; 0 disables it.
    #[serde(default = "default_rescue")]
    pub rescue_iterations: usize,
}

fn default_rescue() -> usize {
    400
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 60,
            cg_tolerance: 1e-10,
            cg_max_iterations: 20_000,
            rescue_iterations: default_rescue(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(format!("Newton tolerance must lie in (0, 1), got {}", self.tolerance));
        }
        if !(self.cg_tolerance > 0.0 && self.cg_tolerance < 1.0) {
            return Err(format!("CG tolerance must lie in (0, 1), got {}", self.cg_tolerance));
        }
        if self.max_iterations == 0 || self.cg_max_iterations == 0 {
            return Err("iteration caps must be at least 1".into());
        }
        Ok(())
    }
}

/// Which linearisation to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentKind {
    /// Exact derivative of the internal force.
    Consistent,
    /// Consistent bond blocks with negative eigenvalues raised to zero.
    Clipped,
    /// Axial secant stiffness `P·T/|x|·ê êᵀ`.
    Secant,
}

/// Jacobian over all DOFs before constraint elimination.
#[derive(Debug, Clone)]
pub struct SparseTangent {
    pub matrix: CsrMatrix,
    pub dim: usize,
    pub constrained: Vec<bool>,
}

impl SparseTangent {
    /// Row index of `(particle, axis)`.
    pub fn dof(&self, particle: usize, axis: usize) -> usize {
        particle * self.dim + axis
    }
}

/// Assembles `∂F/∂u` at the current state.
pub fn assemble_jacobian(model: &Model, state: &SystemState, kind: TangentKind) -> Result<SparseTangent, MechanicsError> {
    let pattern = &model.pattern;
    let mut matrix = pattern.empty_matrix();
    let dim = model.dim();
    let t = &model.horizons;
    for i in 0..model.num_particles() {
        let diag = pattern.diag_slot[i];
        for e in t.range(i) {
            if !t.alive[t.bond_of[e]] {
                continue;
            }
            let k = kinematics(model, state, i, e)?;
            let deg = degradation_at(model, k.s_eff);
            let slope = match (&model.damage, k.loading) {
                (Some(law), true) => law.slope(k.s),
                _ => 0.0,
            };
            if deg == 0.0 && slope == 0.0 {
                continue;
            }
            let p = model.coeff[e];
            let slot = pattern.bond_slot[e];
            let mut block = [[0.0; 3]; 3];
            match kind {
                TangentKind::Consistent => {
                    let a = 1.0 / k.lx - 1.0 / k.ly;
                    let outer = deg / (k.ly * k.ly * k.ly) + slope * a / (k.lx * k.ly);
                    for (pp, row) in block.iter_mut().enumerate().take(dim) {
                        for (q, v) in row.iter_mut().enumerate().take(dim) {
                            let delta = if pp == q { deg * a } else { 0.0 };
                            *v = p * (delta + outer * k.y[pp] * k.y[q]);
                        }
                    }
                }
                TangentKind::Clipped => {
                    // Block = λt (I − êêᵀ) + λa êêᵀ; keep the non-negative part of each.
                    let a = 1.0 / k.lx - 1.0 / k.ly;
                    let transverse = (p * deg * a).max(0.0);
                    let axial = (p * (deg * a + deg / k.ly + slope * a * k.ly / k.lx)).max(0.0);
                    let w = (axial - transverse) / (k.ly * k.ly);
                    for (pp, row) in block.iter_mut().enumerate().take(dim) {
                        for (q, v) in row.iter_mut().enumerate().take(dim) {
                            let delta = if pp == q { transverse } else { 0.0 };
                            *v = delta + w * k.y[pp] * k.y[q];
                        }
                    }
                }
                TangentKind::Secant => {
                    let w = p * deg / (k.lx * k.ly * k.ly);
                    for (pp, row) in block.iter_mut().enumerate().take(dim) {
                        for (q, v) in row.iter_mut().enumerate().take(dim) {
                            *v = w * k.y[pp] * k.y[q];
                        }
                    }
                }
            }
            for (pp, row) in block.iter().enumerate().take(dim) {
                for (q, &v) in row.iter().enumerate().take(dim) {
                    matrix.values[pattern.index(i, pp, slot, q)] += v;
                    matrix.values[pattern.index(i, pp, diag, q)] -= v;
                }
            }
        }
    }
    Ok(SparseTangent {
        matrix,
        dim,
        constrained: model.constrained.clone(),
    })
}

/// `−E(u) = −(F + b)` on the unconstrained DOFs, in increasing DOF order.
pub fn residual(model: &Model, state: &SystemState) -> Result<Vec<f64>, MechanicsError> {
    let mut f = vec![0.0; model.num_dofs()];
    internal_force_into(model, state, &mut f)?;
    Ok((0..model.num_dofs())
        .filter(|&d| !model.constrained[d])
        .map(|d| -(f[d] + state.body_force[d]))
        .collect())
}

/// Linear system on the unconstrained DOFs.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global DOF of each reduced row.
    pub free_dofs: Vec<usize>,
}

impl ReducedSystem {
    /// True when some row no longer sums to zero, i.e. constraints bite.
    pub fn has_nonzero_row_sum(&self) -> bool {
        let sums = self.matrix.row_sums();
        let abs = self.matrix.row_abs_sums();
        sums.iter().zip(&abs).any(|(s, a)| s.abs() > 1e-12 * a)
    }
}

/// Removes constrained rows and columns from `K x = rhs`, moving the known
/// values of constrained unknowns to the right-hand side.
pub fn apply_dirichlet(
    k: &CsrMatrix,
    rhs: &[f64],
    constrained: &[bool],
    values: &[f64],
) -> Result<ReducedSystem, SolverError> {
    let n = k.nrows;
    if rhs.len() != n || constrained.len() != n || values.len() != n {
        return Err(SolverError::Dimension(format!(
            "matrix has {n} rows; rhs {}, mask {}, values {}",
            rhs.len(),
            constrained.len(),
            values.len()
        )));
    }
    let mut map = vec![usize::MAX; n];
    let mut free_dofs = Vec::new();
    for d in 0..n {
        if !constrained[d] {
            map[d] = free_dofs.len();
            free_dofs.push(d);
        }
    }
    if free_dofs.is_empty() {
        return Err(SolverError::NothingToSolve);
    }
    if free_dofs.len() == n {
        return Err(SolverError::Singular(
            "no displacement constraints: rigid-body modes leave the tangent singular".into(),
        ));
    }
    let mut row_ptr = Vec::with_capacity(free_dofs.len() + 1);
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    let mut reduced_rhs = Vec::with_capacity(free_dofs.len());
    row_ptr.push(0);
    for &d in &free_dofs {
        let mut b = rhs[d];
        let (cols, row_vals) = k.row(d);
        for (&c, &v) in cols.iter().zip(row_vals) {
            if constrained[c] {
                b -= v * values[c];
            } else {
                col_idx.push(map[c]);
                vals.push(v);
            }
        }
        row_ptr.push(col_idx.len());
        reduced_rhs.push(b);
    }
    Ok(ReducedSystem {
        matrix: CsrMatrix {
            nrows: free_dofs.len(),
            ncols: free_dofs.len(),
            row_ptr,
            col_idx,
            values: vals,
        },
        rhs: reduced_rhs,
        free_dofs,
    })
}

/// DOFs of bond clusters that touch no constraint (loose fragments).
///
/// Only bonds that still transmit force connect particles.
pub fn floating_dofs(model: &Model, state: &SystemState) -> Result<Vec<bool>, MechanicsError> {
    let n = model.num_particles();
    let dim = model.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let t = &model.horizons;
    for i in 0..n {
        for e in t.range(i) {
            let j = t.neighbors[e];
            if j < i || !t.alive[t.bond_of[e]] {
                continue;
            }
            let k = kinematics(model, state, i, e)?;
            if degradation_at(model, k.s_eff) > 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut anchored = vec![false; n];
    for i in 0..n {
        if (0..dim).any(|a| model.constrained[i * dim + a]) {
            let r = find(&mut parent, i);
            anchored[r] = true;
        }
    }
    let mut out = vec![false; n * dim];
    for i in 0..n {
        let r = find(&mut parent, i);
        if !anchored[r] {
            for a in 0..dim {
                out[i * dim + a] = !model.constrained[i * dim + a];
            }
        }
    }
    Ok(out)
}

/// Diagonal of the reference-configuration stiffness, per DOF.
pub fn reference_stiffness_diagonal(model: &Model) -> Vec<f64> {
    let dim = model.dim();
    let t = &model.horizons;
    let mut out = vec![0.0; model.num_dofs()];
    for i in 0..model.num_particles() {
        for e in t.range(i) {
            if !t.alive[t.bond_of[e]] {
                continue;
            }
            let lx = t.lengths[e];
            let xi = model.xi[e];
            for a in 0..dim {
                out[i * dim + a] += model.coeff[e] * xi[a] * xi[a] / (lx * lx * lx);
            }
        }
    }
    out
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of one converged Newton load step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub cg_iterations: usize,
    /// Relative residual before each iteration and after the last one.
    pub residuals: Vec<f64>,
    pub secant_fallbacks: usize,
    pub frozen_dofs: usize,
    pub entered_band: usize,
    pub failed: usize,
    /// Plain Newton failed and the regularized iteration took over.
    pub rescued: bool,
    pub rejected_steps: usize,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// Solves for equilibrium at the load currently installed in `state`.
///
/// Constrained DOFs may still hold their previous values. Their move to the
/// prescriptions then enters the first iteration as a known increment, so the
/// predictor is the tangent response about the previous equilibrium rather than
/// a jump of the boundary alone, which would overstretch the bonds next to it.
/// Convergence is `‖F + b‖ / d ≤ e` on the
/// solved DOFs, where `d` is `‖b‖` when loads are applied and otherwise the
/// reaction norm on the constrained DOFs; `d` never drops below `1e-6` of
/// the stiffness-weighted displacement norm. On success the damage history
/// is advanced once.
///
/// Residual growth on three consecutive iterations, or the iteration cap,
/// ends plain Newton. The step then restarts from its initial guess with the
/// regularized iteration, which accepts an update when it lowers either the
/// residual or the potential energy. Once that iteration is close to
/// equilibrium it advances the damage history after every accepted update, so
/// bonds that pass the critical stretch stay broken instead of flickering
/// across the jump of `T`.
pub fn newton_load_step(model: &Model, state: &mut SystemState, cfg: &NewtonConfig) -> Result<NewtonReport, SolverError> {
    let mut ctx = StepContext::new(model, state);
    let mut report = NewtonReport::default();
    predict(&mut ctx, model, state, cfg, &mut report)?;
    let start = state.clone();
    let mut events = DamageEvents::default();
    match plain_newton(&mut ctx, model, state, cfg, &mut report) {
        Ok(()) => {}
        Err(SolverError::Diverged { .. } | SolverError::MaxIterations { .. }) if cfg.rescue_iterations > 0 => {
            *state = start;
            report.rescued = true;
            regularized_newton(&mut ctx, model, state, cfg, &mut report, &mut events)?;
        }
        Err(e) => return Err(e),
    }
    let last = update_damage_history(model, state)?;
    report.entered_band = events.entered_band + last.entered_band;
    report.failed = events.failed + last.failed;
    Ok(report)
}

/// The convergence measure of [`newton_load_step`] at the present state.
pub fn relative_residual(model: &Model, state: &SystemState) -> Result<f64, SolverError> {
    let mut ctx = StepContext::new(model, state);
    ctx.measure(model, state, &mut NewtonReport::default())
}

/// Moves constrained DOFs to their prescriptions through one tangent solve about
/// the current state; a no-op when they are already there.
fn predict(
    ctx: &mut StepContext,
    model: &Model,
    state: &mut SystemState,
    cfg: &NewtonConfig,
    report: &mut NewtonReport,
) -> Result<(), SolverError> {
    let jump: Vec<f64> = (0..model.num_dofs())
        .map(|d| if model.constrained[d] { state.prescribed[d] - state.displacement[d] } else { 0.0 })
        .collect();
    if jump.iter().all(|&j| j == 0.0) {
        return Ok(());
    }
    ctx.measure(model, state, report)?;
    let (free, du) = ctx.solve(model, state, cfg, 0.0, Some(&jump), report)?;
    for (k, &d) in free.iter().enumerate() {
        state.displacement[d] += du[k];
    }
    state.enforce_constraints(model);
    report.iterations += 1;
    Ok(())
}

/// The first Newton iterate for the load installed in `state`: the tangent
/// response about the present displacements. Damage history is untouched.
pub fn linear_predictor(model: &Model, state: &SystemState, cfg: &NewtonConfig) -> Result<SystemState, SolverError> {
    let mut out = state.clone();
    let mut ctx = StepContext::new(model, &out);
    let mut report = NewtonReport::default();
    predict(&mut ctx, model, &mut out, cfg, &mut report)?;
    if report.iterations == 0 {
        // Pure load change: one plain iteration.
        ctx.measure(model, &out, &mut report)?;
        let (free, du) = ctx.solve(model, &out, cfg, 0.0, None, &mut report)?;
        for (k, &d) in free.iter().enumerate() {
            out.displacement[d] += du[k];
        }
    }
    Ok(out)
}

/// Load-step constants and scratch space.
struct StepContext {
    k_diag: Vec<f64>,
    b_norm: f64,
    force: Vec<f64>,
    eliminated: Vec<bool>,
    zeros: Vec<f64>,
}

impl StepContext {
    fn new(model: &Model, state: &SystemState) -> Self {
        let ndof = model.num_dofs();
        Self {
            k_diag: reference_stiffness_diagonal(model),
            b_norm: norm(state.body_force.iter().copied()),
            force: vec![0.0; ndof],
            eliminated: vec![false; ndof],
            zeros: vec![0.0; ndof],
        }
    }

    /// Refreshes forces and the eliminated set; returns the relative residual.
    fn measure(&mut self, model: &Model, state: &SystemState, report: &mut NewtonReport) -> Result<f64, SolverError> {
        internal_force_into(model, state, &mut self.force)?;
        let floating = floating_dofs(model, state)?;
        for (d, e) in self.eliminated.iter_mut().enumerate() {
            *e = model.constrained[d] || floating[d];
        }
        report.frozen_dofs = floating.iter().filter(|&&f| f).count();
        Ok(self.relative_residual(model, state))
    }

    /// `‖F + b‖` on the solved DOFs over the load or reaction scale.
    fn relative_residual(&self, model: &Model, state: &SystemState) -> f64 {
        let ndof = model.num_dofs();
        let r = |d: usize| self.force[d] + state.body_force[d];
        let mut denom = if self.b_norm > 0.0 {
            self.b_norm
        } else {
            norm((0..ndof).filter(|&d| model.constrained[d]).map(r))
        };
        let scale = norm((0..ndof).map(|d| self.k_diag[d] * state.displacement[d]));
        denom = denom.max(1e-6 * scale).max(1e-30);
        norm((0..ndof).filter(|&d| !self.eliminated[d]).map(r)) / denom
    }

    fn rhs(&self, state: &SystemState) -> Vec<f64> {
        self.force.iter().zip(&state.body_force).map(|(f, b)| f + b).collect()
    }

    /// Solves `(−K + μ·diag(k_ref)) Δu = F + b` with `Δu = known` on the
    /// eliminated DOFs (zero by default), trying the consistent, clipped
    /// and secant tangents in turn.
    fn solve(
        &self,
        model: &Model,
        state: &SystemState,
        cfg: &NewtonConfig,
        mu: f64,
        known: Option<&[f64]>,
        report: &mut NewtonReport,
    ) -> Result<(Vec<usize>, Vec<f64>), SolverError> {
        let rhs = self.rhs(state);
        let known = known.unwrap_or(&self.zeros);
        for kind in [TangentKind::Consistent, TangentKind::Clipped, TangentKind::Secant] {
            let mut tangent = assemble_jacobian(model, state, kind)?;
            tangent.matrix.scale(-1.0);
            if mu > 0.0 {
                let pattern = &model.pattern;
                for i in 0..model.num_particles() {
                    for a in 0..model.dim() {
                        tangent.matrix.values[pattern.index(i, a, pattern.diag_slot[i], a)] +=
                            mu * self.k_diag[i * model.dim() + a];
                    }
                }
            }
            let system = apply_dirichlet(&tangent.matrix, &rhs, &self.eliminated, known)?;
            match cg_solve(&system.matrix, &system.rhs, cfg.cg_tolerance, cfg.cg_max_iterations) {
                Ok(out) => {
                    report.cg_iterations += out.iterations;
                    return Ok((system.free_dofs, out.solution));
                }
                Err(SolverError::Indefinite { .. }) if kind != TangentKind::Secant => {
                    report.secant_fallbacks += 1;
                }
                Err(err) => return Err(err),
            }
        }
        unreachable!("the secant attempt either solves or returns")
    }
}

fn plain_newton(
    ctx: &mut StepContext,
    model: &Model,
    state: &mut SystemState,
    cfg: &NewtonConfig,
    report: &mut NewtonReport,
) -> Result<(), SolverError> {
    let mut growth = 0;
    loop {
        let rel = ctx.measure(model, state, report)?;
        if let Some(&prev) = report.residuals.last() {
            growth = if rel > prev { growth + 1 } else { 0 };
        }
        report.residuals.push(rel);
        if rel <= cfg.tolerance {
            return Ok(());
        }
        if !rel.is_finite() || growth >= 3 {
            return Err(SolverError::Diverged {
                iterations: report.iterations,
                residual: rel,
            });
        }
        if report.iterations >= cfg.max_iterations {
            return Err(SolverError::MaxIterations {
                iterations: report.iterations,
                residual: rel,
            });
        }
        let (free, du) = ctx.solve(model, state, cfg, 0.0, None, report)?;
        for (k, &d) in free.iter().enumerate() {
            state.displacement[d] += du[k];
        }
        report.iterations += 1;
    }
}

/// Relative residual below which the regularized iteration advances the damage history.
const RATCHET_BELOW: f64 = 1e-3;

/// Newton iteration with a diagonal shift `μ` that grows when a step raises
/// both the residual and the potential energy and shrinks otherwise.

fn regularized_newton(
    ctx: &mut StepContext,
    model: &Model,
    state: &mut SystemState,
    cfg: &NewtonConfig,
    report: &mut NewtonReport,
    events: &mut DamageEvents,
) -> Result<(), SolverError> {
    let mut mu: f64 = 1e-3;
    let mut rel = ctx.measure(model, state, report)?;
    let mut energy = potential_energy(model, state)?;
    report.residuals.push(rel);
    for _ in 0..cfg.rescue_iterations {
        if rel <= cfg.tolerance {
            return Ok(());
        }
        let (free, du) = ctx.solve(model, state, cfg, mu, None, report)?;
        let mut trial = state.clone();
        for (k, &d) in free.iter().enumerate() {
            trial.displacement[d] += du[k];
        }
        report.iterations += 1;
        let accepted = match potential_energy(model, &trial) {
            Ok(e) => {
                internal_force_into(model, &trial, &mut ctx.force)?;
                let trial_rel = ctx.relative_residual(model, &trial);
                (trial_rel < rel || e < energy).then_some(e)
            }
            Err(_) => None,
        };
        match accepted {
            Some(_) => {
                *state = trial;
                rel = ctx.measure(model, state, report)?;
                if rel < RATCHET_BELOW {
                    // Near equilibrium, ratchet the history so bonds cannot chatter
                    // across the jumps of T. Far from it the iterates are not physical.
                    let ev = update_damage_history(model, state)?;
                    events.entered_band += ev.entered_band;
                    events.failed += ev.failed;
                    rel = ctx.measure(model, state, report)?;
                }
                energy = potential_energy(model, state)?;
                report.residuals.push(rel);
                mu *= 0.25;
                if mu < 1e-12 {
                    mu = 0.0;
                }
            }
            None => {
                report.rejected_steps += 1;
                mu = (mu * 8.0).max(1e-6);
                if mu > 1e12 {
                    break;
                }
                ctx.measure(model, state, report)?;
            }
        }
    }
    if rel <= cfg.tolerance {
        return Ok(());
    }
    Err(SolverError::MaxIterations {
        iterations: report.iterations,
        residual: rel,
    })
}

/// Totals over the Newton steps of one load increment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub substeps: usize,
    pub halvings: usize,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub secant_fallbacks: usize,
    pub damage: DamageTally,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DamageTally {
    pub entered_band: usize,
    pub failed: usize,
}

impl From<DamageEvents> for DamageTally {
    fn from(e: DamageEvents) -> Self {
        Self {
            entered_band: e.entered_band,
            failed: e.failed,
        }
    }
}

fn retryable(err: &SolverError) -> bool {
    matches!(
        err,
        SolverError::Diverged { .. }
            | SolverError::MaxIterations { .. }
            | SolverError::Indefinite { .. }
            | SolverError::Mechanics(_)
    )
}

/// Moves the load from `from` to `to` with Newton steps, halving the
/// increment up to `max_halvings` times when a step fails.
pub fn advance_implicit(
    model: &Model,
    state: &mut SystemState,
    from: LoadFraction,
    to: LoadFraction,
    cfg: &NewtonConfig,
    max_halvings: usize,
) -> Result<IncrementReport, SolverError> {
    let start = state.clone();
    let mut last_err = None;
    for halvings in 0..=max_halvings {
        let parts = 1u64 << halvings;
        let mut report = IncrementReport {
            halvings,
            ..Default::default()
        };
        let mut failed = None;
        for k in 1..=parts {
            let level = from.lerp(to, k, parts);
            state.install_load(&model.load_at(level.value()));
            match newton_load_step(model, state, cfg) {
                Ok(r) => {
                    report.substeps += 1;
                    report.newton_iterations += r.iterations;
                    report.cg_iterations += r.cg_iterations;
                    report.secant_fallbacks += r.secant_fallbacks;
                    report.damage.entered_band += r.entered_band;
                    report.damage.failed += r.failed;
                    report.residuals.push(r.final_residual());
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => return Ok(report),
            Some(e) if retryable(&e) => {
                *state = start.clone();
                last_err = Some(e);
            }
            Some(e) => return Err(e),
        }
    }
    Err(SolverError::StepFailed {
        halvings: max_halvings,
        source: Box::new(last_err.expect("at least one attempt failed")),
    })
}
