//! Bond kinematics, pairwise forces, and damage bookkeeping.

use crate::error::MechanicsError;
use crate::geometry::Vec3;
use crate::material::DamageLaw;
use crate::model::{LoadState, Model};

/// Displacements, damage history, and the current load of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub dim: usize,
    /// Per degree of freedom.
    pub displacement: Vec<f64>,
    /// Largest stretch each undirected bond has seen.
    pub max_stretch: Vec<f64>,
    /// Body force density per degree of freedom (N/m³).
    pub body_force: Vec<f64>,
    /// Prescribed displacement per degree of freedom; read only where constrained.
    pub prescribed: Vec<f64>,
}

impl SystemState {
    pub fn new(model: &Model) -> Self {
        let n = model.num_dofs();
        Self {
            dim: model.dim(),
            displacement: vec![0.0; n],
            max_stretch: vec![0.0; model.horizons.num_bonds()],
            body_force: vec![0.0; n],
            prescribed: vec![0.0; n],
        }
    }

    /// Installs a load level and moves constrained DOFs onto their prescription.
    pub fn apply_load(&mut self, model: &Model, load: &LoadState) {
        self.install_load(load);
        self.enforce_constraints(model);
    }

    /// Sets prescriptions and body forces without moving any particle.
    pub fn install_load(&mut self, load: &LoadState) {
        self.prescribed.clone_from(&load.prescribed);
        self.body_force.clone_from(&load.body_force);
    }

    pub fn enforce_constraints(&mut self, model: &Model) {
        for (d, &c) in model.constrained.iter().enumerate() {
            if c {
                self.displacement[d] = self.prescribed[d];
            }
        }
    }

    pub fn displacement_of(&self, i: usize) -> Vec3 {
        let mut u = [0.0; 3];
        u[..self.dim].copy_from_slice(&self.displacement[i * self.dim..(i + 1) * self.dim]);
        u
    }

    /// Deformed position `y = x + u`.
    pub fn deformed(&self, model: &Model, i: usize) -> Vec3 {
        let x = model.particles.positions[i];
        let u = self.displacement_of(i);
        [x[0] + u[0], x[1] + u[1], x[2] + u[2]]
    }
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// `(|ξ+η| − |ξ|)/|ξ|`, evaluated without cancellation for small `η`.
pub fn stretch(xi: &Vec3, eta: &Vec3) -> Result<f64, MechanicsError> {
    let y = [xi[0] + eta[0], xi[1] + eta[1], xi[2] + eta[2]];
    let ly = norm(&y);
    if ly == 0.0 {
        return Err(MechanicsError::SingularBond { i: 0, j: 0 });
    }
    let lx = norm(xi);
    Ok(stretch_from(xi, eta, lx, ly))
}

#[inline]
pub(crate) fn stretch_from(xi: &Vec3, eta: &Vec3, lx: f64, ly: f64) -> f64 {
    (2.0 * dot(xi, eta) + dot(eta, eta)) / ((ly + lx) * lx)
}

/// Force density one bond exerts on its first end point:
/// `c·s·T·μν·V · (ξ+η)/|ξ+η|`.
pub fn bond_force(
    xi: &Vec3,
    eta: &Vec3,
    c: f64,
    degradation: f64,
    correction: f64,
    volume: f64,
) -> Result<Vec3, MechanicsError> {
    let s = stretch(xi, eta)?;
    let y = [xi[0] + eta[0], xi[1] + eta[1], xi[2] + eta[2]];
    let scale = c * s * degradation * correction * volume / norm(&y);
    Ok(y.map(|v| scale * v))
}

/// Kinematics of one directed bond at the current state.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BondKinematics {
    pub y: Vec3,
    pub ly: f64,
    pub lx: f64,
    pub s: f64,
    /// Stretch the degradation law is evaluated at.
    pub s_eff: f64,
    /// Whether the current stretch sets the history (drives the slope term).
    pub loading: bool,
}

#[inline]
pub(crate) fn kinematics(
    model: &Model,
    state: &SystemState,
    i: usize,
    e: usize,
) -> Result<BondKinematics, MechanicsError> {
    let dim = state.dim;
    let j = model.horizons.neighbors[e];
    let xi = &model.xi[e];
    let mut eta = [0.0; 3];
    for a in 0..dim {
        eta[a] = state.displacement[j * dim + a] - state.displacement[i * dim + a];
    }
    let y = [xi[0] + eta[0], xi[1] + eta[1], xi[2] + eta[2]];
    let ly = norm(&y);
    if ly == 0.0 || !ly.is_finite() {
        return Err(MechanicsError::SingularBond { i, j });
    }
    let lx = model.horizons.lengths[e];
    let s = stretch_from(xi, &eta, lx, ly);
    let hist = state.max_stretch[model.horizons.bond_of[e]];
    let irreversible = model.damage.map_or(false, |d| d.irreversible);
    let (s_eff, loading) = if irreversible && hist > s {
        (hist, false)
    } else {
        (s, true)
    };
    Ok(BondKinematics {
        y,
        ly,
        lx,
        s,
        s_eff,
        loading,
    })
}

#[inline]
pub(crate) fn degradation_at(model: &Model, s_eff: f64) -> f64 {
    model.damage.map_or(1.0, |d| d.degradation(s_eff))
}

/// Internal force density on every degree of freedom (N/m³), written into `out`.
pub fn internal_force_into(
    model: &Model,
    state: &SystemState,
    out: &mut [f64],
) -> Result<(), MechanicsError> {
    let dim = state.dim;
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..model.num_particles() {
        let mut f = [0.0; 3];
        for e in model.horizons.range(i) {
            if !model.horizons.alive[model.horizons.bond_of[e]] {
                continue;
            }
            let k = kinematics(model, state, i, e)?;
            let t = degradation_at(model, k.s_eff);
            if t == 0.0 {
                continue;
            }
            let scale = model.coeff[e] * k.s * t / k.ly;
            for a in 0..dim {
                f[a] += scale * k.y[a];
            }
        }
        for a in 0..dim {
            if !f[a].is_finite() {
                return Err(MechanicsError::NonFiniteForce { particle: i });
            }
            out[i * dim + a] = f[a];
        }
    }
    Ok(())
}

/// `F_i = Σ_j c·s·T(ŝ)·μν·V_j·(ξ+η)/|ξ+η|` over alive bonds.
pub fn assemble_internal_force(model: &Model, state: &SystemState) -> Result<Vec<f64>, MechanicsError> {
    let mut out = vec![0.0; model.num_dofs()];
    internal_force_into(model, state, &mut out)?;
    Ok(out)
}

/// Volume-weighted lost fraction of each particle's bonds; 0 for empty horizons.
pub fn damage_index(model: &Model, state: &SystemState) -> Result<Vec<f64>, MechanicsError> {
    let t = &model.horizons;
    let mut phi = vec![0.0; model.num_particles()];
    for (i, out) in phi.iter_mut().enumerate() {
        let mut total = 0.0;
        let mut intact = 0.0;
        for e in t.range(i) {
            let v = model.particles.volumes[t.neighbors[e]];
            total += v;
            if t.alive[t.bond_of[e]] {
                let k = kinematics(model, state, i, e)?;
                intact += degradation_at(model, k.s_eff) * v;
            }
        }
        *out = if total > 0.0 { 1.0 - intact / total } else { 0.0 };
    }
    Ok(phi)
}

/// Bond status changes recorded by one history update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DamageEvents {
    /// Bonds whose history first exceeded the onset stretch.
    pub entered_band: usize,
    /// Bonds whose history first reached the critical stretch.
    pub failed: usize,
}

impl DamageEvents {
    pub fn any(&self) -> bool {
        self.entered_band > 0 || self.failed > 0
    }
}

/// `s_max ← max(s_max, s)` on every alive bond.
pub fn update_damage_history(model: &Model, state: &mut SystemState) -> Result<DamageEvents, MechanicsError> {
    let t = &model.horizons;
    let dim = state.dim;
    let mut events = DamageEvents::default();
    for (b, &[i, j]) in t.bonds.iter().enumerate() {
        if !t.alive[b] {
            continue;
        }
        let e = t.offsets[i] + t.neighbors[t.range(i)].binary_search(&j).expect("bond is listed");
        let xi = &model.xi[e];
        let mut eta = [0.0; 3];
        for a in 0..dim {
            eta[a] = state.displacement[j * dim + a] - state.displacement[i * dim + a];
        }
        let y = [xi[0] + eta[0], xi[1] + eta[1], xi[2] + eta[2]];
        let ly = norm(&y);
        if ly == 0.0 {
            return Err(MechanicsError::SingularBond { i, j });
        }
        let s = stretch_from(xi, &eta, t.lengths[e], ly);
        let old = state.max_stretch[b];
        if s > old {
            state.max_stretch[b] = s;
            if let Some(law) = &model.damage {
                if old <= law.onset_stretch && s > law.onset_stretch {
                    events.entered_band += 1;
                }
                if old < law.critical_stretch && s >= law.critical_stretch {
                    events.failed += 1;
                }
            }
        }
    }
    Ok(events)
}

/// `∫₀ˢ σ·T(max(σ, h)) dσ`: the bond energy per unit `c·|ξ|` at stretch `s`
/// with history `h` (ignored for reversible laws).
pub fn bond_energy_density(law: Option<&DamageLaw>, s: f64, history: f64) -> f64 {
    let Some(law) = law else {
        return 0.5 * s * s;
    };
    let h = if law.irreversible { history.max(0.0) } else { 0.0 };
    if s <= h {
        return law.degradation(h) * 0.5 * s * s;
    }
    law.degradation(h) * 0.5 * h * h + softening_integral(law, h, s)
}

/// `∫ σ T(σ) dσ` over `[lo, hi]`.
fn softening_integral(law: &DamageLaw, lo: f64, hi: f64) -> f64 {
    let (sm, sc) = (law.onset_stretch, law.critical_stretch);
    let mut total = 0.0;
    let elastic_hi = hi.min(sm);
    if elastic_hi > lo {
        total += 0.5 * (elastic_hi * elastic_hi - lo * lo);
    }
    let (a, b) = (lo.max(sm), hi.min(sc));
    if b > a {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        total += half
            * GAUSS_20
                .iter()
                .map(|&(x, w)| {
                    let sigma = mid + half * x;
                    w * sigma * law.degradation(sigma)
                })
                .sum::<f64>();
    }
    total
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
const GAUSS_20: [(f64, f64); 20] = [
    (-0.993_128_599_185_094_9, 0.017_614_007_139_152_118),
    (-0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
    (-0.912_234_428_251_326, 0.062_672_048_334_109_06),
    (-0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
    (-0.746_331_906_460_150_8, 0.101_930_119_817_240_44),
    (-0.636_053_680_726_515, 0.118_194_531_961_518_42),
    (-0.510_867_001_950_827_1, 0.131_688_638_449_176_63),
    (-0.373_706_088_715_419_56, 0.142_096_109_318_382_05),
    (-0.227_785_851_141_645_08, 0.149_172_986_472_603_75),
    (-0.076_526_521_133_497_33, 0.152_753_387_130_725_85),
    (0.076_526_521_133_497_33, 0.152_753_387_130_725_85),
    (0.227_785_851_141_645_08, 0.149_172_986_472_603_75),
    (0.373_706_088_715_419_56, 0.142_096_109_318_382_05),
    (0.510_867_001_950_827_1, 0.131_688_638_449_176_63),
    (0.636_053_680_726_515, 0.118_194_531_961_518_42),
    (0.746_331_906_460_150_8, 0.101_930_119_817_240_44),
    (0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
    (0.912_234_428_251_326, 0.062_672_048_334_109_06),
    (0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
    (0.993_128_599_185_094_9, 0.017_614_007_139_152_118),
];

/// Total potential energy `Σ_i V_i (½ Σ_j c μν V_j |ξ| g(s) − b_i·u_i)`.
///
/// With the damage history held fixed, `−∂Π/∂u_i = V_i (F_i + b_i)`.
pub fn potential_energy(model: &Model, state: &SystemState) -> Result<f64, MechanicsError> {
    let t = &model.horizons;
    let dim = state.dim;
    let mut total = 0.0;
    for i in 0..model.num_particles() {
        let mut bonds = 0.0;
        for e in t.range(i) {
            let b = t.bond_of[e];
            if !t.alive[b] {
                continue;
            }
            let k = kinematics(model, state, i, e)?;
            bonds += model.coeff[e] * k.lx * bond_energy_density(model.damage.as_ref(), k.s, state.max_stretch[b]);
        }
        let work: f64 = (0..dim)
            .map(|a| state.body_force[i * dim + a] * state.displacement[i * dim + a])
            .sum();
        total += model.particles.volumes[i] * (0.5 * bonds - work);
    }
    Ok(total)
}

/// Current stretch of every undirected bond (dead bonds included).
pub fn bond_stretches(model: &Model, state: &SystemState) -> Result<Vec<f64>, MechanicsError> {
    let t = &model.horizons;
    let mut out = vec![0.0; t.num_bonds()];
    for i in 0..model.num_particles() {
        for e in t.range(i) {
            if t.neighbors[e] > i {
                out[t.bond_of[e]] = kinematics(model, state, i, e)?.s;
            }
        }
    }
    Ok(out)
}
