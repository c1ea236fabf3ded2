//! Declarative scenarios: the built-in catalog, file parsing, and dispatch
//! to the solvers.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adaptive::{run_adaptive, run_explicit, run_implicit, AdaptiveConfig, Method, PhaseModels, RunReport};
use crate::adr::{AdrConfig, LoadProgram};
use crate::error::{ScenarioError, SetupError};
use crate::export::FieldSnapshot;
use crate::geometry::{BoundaryLayer, GeometrySpec, Hole, LayerRole, Notch, Side};
use crate::implicit::NewtonConfig;
use crate::material::{DamageLaw, DimensionMode, MaterialParams};
use crate::mechanics::SystemState;
use crate::model::Model;

/// Elastic constants with units spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub youngs_modulus_pa: f64,
    pub density_kg_per_m3: f64,
    pub mode: DimensionMode,
    /// Horizon as a multiple of the grid spacing.
    pub horizon_factor: f64,
    /// Horizon multiple used once damage evolves; defaults to `horizon_factor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fracture_horizon_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_m2: Option<f64>,
}

impl MaterialSection {
    pub fn params(&self, spacing: f64, factor: f64) -> MaterialParams {
        MaterialParams {
            youngs_modulus: self.youngs_modulus_pa,
            density: self.density_kg_per_m3,
            mode: self.mode,
            thickness: self.thickness_m,
            area: self.area_m2,
            horizon: factor * spacing,
        }
        .resolved(spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingSection {
    /// Newton load steps of a pure implicit run.
    pub implicit_steps: u64,
    /// Ramp length of a pure relaxation run; 0 applies the full load at once.
    pub explicit_ramp_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSection {
    pub implicit_steps: u64,
    pub explicit_steps: u64,
    pub window: usize,
    pub max_halvings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    pub newton: NewtonConfig,
    pub adr: AdrConfig,
    pub adaptive: AdaptiveSection,
}

impl SolverSection {
    pub fn adaptive_config(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            implicit_steps: self.adaptive.implicit_steps,
            explicit_steps: self.adaptive.explicit_steps,
            window: self.adaptive.window,
            max_halvings: self.adaptive.max_halvings,
            newton: self.newton,
            adr: self.adr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub material: MaterialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damage: Option<DamageLaw>,
    pub loading: LoadingSection,
    pub solver: SolverSection,
    pub geometry: GeometrySpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(format!("{}: {m}", self.name)));
        self.geometry.validate()?;
        let dx = self.geometry.spacing_m;
        for f in std::iter::once(self.material.horizon_factor).chain(self.material.fracture_horizon_factor) {
            self.material.params(dx, f).validate()?;
        }
        if self.material.mode.dimension() != self.geometry.dimension {
            return invalid(format!(
                "material mode {:?} does not match a {}D geometry",
                self.material.mode, self.geometry.dimension
            ));
        }
        if let Some(law) = &self.damage {
            law.validate()?;
        }
        if self.loading.implicit_steps == 0 {
            return invalid("loading.implicit_steps must be at least 1".into());
        }
        if let Err(m) = self.solver.newton.validate() {
            return invalid(m);
        }
        if let Err(m) = self.solver.adaptive_config().validate() {
            return invalid(m);
        }
        if !(self.solver.adr.tolerance > 0.0) || self.solver.adr.max_steps == 0 || !(self.solver.adr.dt > 0.0) {
            return invalid("relaxation tolerance, step budget and time step must be positive".into());
        }
        let loaded = self.geometry.boundaries.iter().any(|b| match b.role {
            LayerRole::Constrained => b.displacement_m.iter().any(|&d| d != 0.0),
            LayerRole::Load => b.body_force_n_per_m3.iter().any(|&f| f != 0.0),
        });
        if !loaded {
            return invalid("no boundary layer carries a displacement or body force".into());
        }
        for (k, b) in self.geometry.boundaries.iter().enumerate() {
            if b.role == LayerRole::Load && b.displacement_m.iter().any(|&d| d != 0.0) {
                return invalid(format!("load layer {k} cannot prescribe a displacement"));
            }
            if b.role == LayerRole::Constrained && b.body_force_n_per_m3.iter().any(|&f| f != 0.0) {
                return invalid(format!("constrained layer {k} cannot carry a body force"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Deformation-phase model and, when the horizon changes for fracture,
    /// the fracture-phase model.
    pub fn build_models(&self) -> Result<(Model, Option<Model>), SetupError> {
        let dx = self.geometry.spacing_m;
        let base = Model::build(&self.geometry, &self.material.params(dx, self.material.horizon_factor), self.damage)?;
        let fracture = match self.material.fracture_horizon_factor {
            Some(f) if f != self.material.horizon_factor => {
                Some(Model::build(&self.geometry, &self.material.params(dx, f), self.damage)?)
            }
            _ => None,
        };
        Ok((base, fracture))
    }
}

/// Names of every built-in scenario.
pub const BUILTIN_NAMES: [&str; 12] = [
    "bar2d_transverse",
    "bar2d_transverse_desk",
    "plate_hole_tension",
    "plate_hole_tension_desk",
    "bar3d_cantilever",
    "bar3d_cantilever_desk",
    "square_plate_hole",
    "square_plate_hole_desk",
    "three_point_bending",
    "three_point_bending_desk",
    "multi_hole_plate",
    "multi_hole_plate_desk",
];

fn solver(method: Method, adaptive: (u64, u64)) -> SolverSection {
    SolverSection {
        method,
        newton: NewtonConfig::default(),
        adr: AdrConfig::default(),
        adaptive: AdaptiveSection {
            implicit_steps: adaptive.0,
            explicit_steps: adaptive.1,
            window: 500,
            max_halvings: 4,
        },
    }
}

fn steel(e: f64, rho: f64, mode: DimensionMode) -> MaterialSection {
    MaterialSection {
        youngs_modulus_pa: e,
        density_kg_per_m3: rho,
        mode,
        horizon_factor: 3.015,
        fracture_horizon_factor: None,
        thickness_m: None,
        area_m2: None,
    }
}

fn bar2d(name: &str, cells: [usize; 2], dx: f64, force: f64) -> Scenario {
    let mut geometry = GeometrySpec::lattice(2, [cells[0], cells[1], 1], dx);
    geometry.boundaries = vec![
        BoundaryLayer::side(Side::Left, 3, LayerRole::Constrained),
        BoundaryLayer::side(Side::Right, 1, LayerRole::Load).with_body_force([0.0, -force, 0.0]),
    ];
    Scenario {
        name: name.into(),
        description: "Cantilever bar under a transverse end load".into(),
        material: steel(200e9, 7850.0, DimensionMode::PlaneStress),
        damage: None,
        loading: LoadingSection {
            implicit_steps: 1,
            explicit_ramp_steps: 0,
        },
        solver: solver(Method::Implicit, (1, 1)),
        geometry,
    }
}

fn plate_hole(name: &str, cells: [usize; 2], dx: f64, ramp: u64) -> Scenario {
    let mut geometry = GeometrySpec::lattice(2, [cells[0], cells[1], 1], dx);
    let [l, w, _] = geometry.extent_m;
    let pull = 1.6e-3;
    geometry.holes = vec![Hole {
        center_m: [0.5 * l, 0.5 * w],
        radius_m: 0.005,
    }];
    geometry.boundaries = vec![
        BoundaryLayer::side(Side::Left, 3, LayerRole::Constrained).with_displacement([-pull, 0.0, 0.0]),
        BoundaryLayer::side(Side::Right, 3, LayerRole::Constrained).with_displacement([pull, 0.0, 0.0]),
    ];
    Scenario {
        name: name.into(),
        description: "Rectangular plate with a central hole under end tension".into(),
        material: steel(192e9, 8000.0, DimensionMode::PlaneStress),
        damage: Some(DamageLaw::new(0.033, 0.066, 3.0)),
        loading: LoadingSection {
            implicit_steps: 100,
            explicit_ramp_steps: ramp,
        },
        solver: solver(Method::Implicit, (10, 1000)),
        geometry,
    }
}

fn bar3d(name: &str, cells: [usize; 3], dx: f64, force: f64) -> Scenario {
    let mut geometry = GeometrySpec::lattice(3, cells, dx);
    geometry.boundaries = vec![
        BoundaryLayer::side(Side::Left, 3, LayerRole::Constrained),
        BoundaryLayer::side(Side::Right, 1, LayerRole::Load).with_body_force([0.0, 0.0, -force]),
    ];
    Scenario {
        name: name.into(),
        description: "3D cantilever bar under a transverse end load".into(),
        material: steel(200e9, 7850.0, DimensionMode::ThreeD),
        damage: None,
        loading: LoadingSection {
            implicit_steps: 1,
            explicit_ramp_steps: 0,
        },
        solver: solver(Method::Adaptive, (1, 1)),
        geometry,
    }
}

fn square_plate(name: &str, cells: usize, dx: f64, ramp: u64) -> Scenario {
    let mut geometry = GeometrySpec::lattice(2, [cells, cells, 1], dx);
    let l = geometry.extent_m[0];
    let pull = 2.75e-4;
    geometry.holes = vec![Hole {
        center_m: [0.5 * l, 0.5 * l],
        radius_m: 0.005,
    }];
    geometry.boundaries = vec![
        BoundaryLayer::side(Side::Bottom, 3, LayerRole::Constrained).with_displacement([0.0, -pull, 0.0]),
        BoundaryLayer::side(Side::Top, 3, LayerRole::Constrained).with_displacement([0.0, pull, 0.0]),
    ];
    Scenario {
        name: name.into(),
        description: "Square plate with a central hole under tension".into(),
        material: steel(192e9, 8000.0, DimensionMode::PlaneStress),
        damage: Some(DamageLaw::new(0.015, 0.02, 3.0)),
        loading: LoadingSection {
            implicit_steps: 3,
            explicit_ramp_steps: ramp,
        },
        solver: solver(Method::Adaptive, (3, 180)),
        geometry,
    }
}

fn three_point(name: &str, cells: [usize; 2], dx: f64, ramp: u64, explicit: u64) -> Scenario {
    let mut geometry = GeometrySpec::lattice(2, [cells[0], cells[1], 1], dx);
    let [l, w, _] = geometry.extent_m;
    let mid = 0.5 * l;
    let span = 4.0 * dx;
    geometry.notches = vec![Notch {
        start_m: [mid, 0.0],
        end_m: [mid, 0.3 * w],
        half_width_m: 0.0,
    }];
    geometry.boundaries = vec![
        BoundaryLayer::side(Side::Bottom, 3, LayerRole::Constrained)
            .with_span(mid - 0.105, span)
            .with_axes([false, true, false]),
        BoundaryLayer::side(Side::Bottom, 3, LayerRole::Constrained)
            .with_span(mid + 0.105, span)
            .with_axes([false, true, false]),
        BoundaryLayer::side(Side::Top, 3, LayerRole::Constrained)
            .with_span(mid, span)
            .with_displacement([0.0, -4e-3, 0.0]),
    ];
    Scenario {
        name: name.into(),
        description: "Notched beam in three-point bending".into(),
        material: steel(200e9, 8000.0, DimensionMode::PlaneStress),
        damage: Some(DamageLaw::new(0.016, 0.02, 3.0)),
        loading: LoadingSection {
            implicit_steps: 5,
            explicit_ramp_steps: ramp,
        },
        solver: solver(Method::Adaptive, (5, explicit)),
        geometry,
    }
}

fn multi_hole(name: &str, dx: f64, ramp: u64) -> Scenario {
    let cells = [(0.065 / dx).round() as usize, (0.12 / dx).round() as usize];
    let mut geometry = GeometrySpec::lattice(2, [cells[0], cells[1], 1], dx);
    geometry.holes = vec![
        Hole {
            center_m: [0.020, 0.020],
            radius_m: 0.0065,
        },
        Hole {
            center_m: [0.020, 0.100],
            radius_m: 0.0065,
        },
        Hole {
            center_m: [0.0365, 0.051],
            radius_m: 0.010,
        },
        Hole {
            center_m: [0.045, 0.083],
            radius_m: 0.006,
        },
    ];
    let pull = 8e-4;
    geometry.boundaries = vec![
        BoundaryLayer::hole_rim(0, 3, LayerRole::Constrained).with_displacement([0.0, -pull, 0.0]),
        BoundaryLayer::hole_rim(1, 3, LayerRole::Constrained).with_displacement([0.0, pull, 0.0]),
    ];
    let mut material = steel(200e9, 8000.0, DimensionMode::PlaneStress);
    material.fracture_horizon_factor = Some(8.015);
    Scenario {
        name: name.into(),
        description: "Plate with four holes pulled apart at two pinned holes".into(),
        material,
        damage: Some(DamageLaw::new(0.016, 0.02, 3.0)),
        loading: LoadingSection {
            implicit_steps: 5,
            explicit_ramp_steps: ramp,
        },
        solver: solver(Method::Adaptive, (5, 1500)),
        geometry,
    }
}

/// The built-in scenario called `name`.
pub fn builtin(name: &str) -> Option<Scenario> {
    let sc = match name {
        "bar2d_transverse" => bar2d(name, [100, 10], 0.005, 1e8),
        "bar2d_transverse_desk" => bar2d(name, [50, 5], 0.01, 1e8),
        "plate_hole_tension" => plate_hole(name, [150, 50], 1e-3, 10_000),
        "plate_hole_tension_desk" => plate_hole(name, [75, 25], 2e-3, 5_000),
        "bar3d_cantilever" => bar3d(name, [100, 10, 10], 0.01, 5e7),
        "bar3d_cantilever_desk" => bar3d(name, [50, 5, 5], 0.02, 5e7),
        "square_plate_hole" => square_plate(name, 50, 1e-3, 1_000),
        "square_plate_hole_desk" => square_plate(name, 40, 1.25e-3, 1_000),
        "three_point_bending" => three_point(name, [200, 50], 1.2e-3, 40_000, 1000),
        "three_point_bending_desk" => three_point(name, [100, 25], 2.4e-3, 10_000, 1000),
        "multi_hole_plate" => multi_hole(name, 1e-3, 80_000),
        "multi_hole_plate_desk" => multi_hole(name, 2.5e-3, 20_000),
        _ => return None,
    };
    Some(sc)
}

/// A built-in name or the path of a scenario file.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    if let Some(sc) = builtin(source) {
        sc.validate()?;
        return Ok(sc);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(ScenarioError::UnknownBuiltin(source.into()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Read {
        path: source.into(),
        source: e,
    })?;
    Scenario::from_toml(&text)
}

/// Final fields and the run report.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshot: FieldSnapshot,
    pub report: RunReport,
}

/// Runs `sc` with its configured method.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput, ScenarioError> {
    let setup = Instant::now();
    let (base, fracture) = sc.build_models()?;
    let setup_seconds = setup.elapsed().as_secs_f64();
    let wrap = |e| ScenarioError::Solver {
        scenario: sc.name.clone(),
        source: e,
    };
    let fracture_model = fracture.as_ref().unwrap_or(&base);
    let (state, model, mut report) = match sc.solver.method {
        Method::Implicit => {
            let mut st = SystemState::new(fracture_model);
            let r = run_implicit(
                fracture_model,
                &mut st,
                sc.loading.implicit_steps,
                &sc.solver.newton,
                sc.solver.adaptive.max_halvings,
            )
            .map_err(wrap)?;
            (st, fracture_model, r)
        }
        Method::Adr => {
            let mut st = SystemState::new(fracture_model);
            let program = LoadProgram::ramp(sc.loading.explicit_ramp_steps);
            let r = run_explicit(fracture_model, &mut st, &program, &sc.solver.adr).map_err(wrap)?;
            (st, fracture_model, r)
        }
        Method::Adaptive => {
            let models = PhaseModels {
                deformation: &base,
                fracture: fracture_model,
            };
            let (st, r) = run_adaptive(models, &sc.solver.adaptive_config()).map_err(wrap)?;
            let m = if r.fracture_model_used { fracture_model } else { &base };
            (st, m, r)
        }
    };
    report.setup_seconds = setup_seconds;
    let snapshot = FieldSnapshot::capture(model, &state).map_err(|e| wrap(e.into()))?;
    Ok(RunOutput { snapshot, report })
}

/// `‖a − b‖ / ‖b‖` over matching displacement vectors.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let base: f64 = b.iter().map(|y| y * y).sum();
    if diff == 0.0 {
        0.0
    } else {
        (diff / base).sqrt()
    }
}

/// One row of a loading-step sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: u64,
    /// Relative L2 distance to the relaxation reference.
    pub distance: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

/// Implicit runs at each total step count, compared with a relaxation reference.
pub fn sweep_loading_steps(sc: &Scenario, steps: &[u64]) -> Result<(RunOutput, Vec<SweepRow>), ScenarioError> {
    let mut reference = sc.clone();
    reference.solver.method = Method::Adr;
    let reference = run_scenario(&reference)?;
    let mut rows = Vec::with_capacity(steps.len());
    for &n in steps {
        let mut run = sc.clone();
        run.solver.method = Method::Implicit;
        run.loading.implicit_steps = n;
        let row = match run_scenario(&run) {
            Ok(out) => SweepRow {
                steps: n,
                distance: Some(relative_l2(
                    &out.snapshot.displacements(),
                    &reference.snapshot.displacements(),
                )),
                error: None,
                seconds: out.report.seconds.total(),
            },
            Err(e) => SweepRow {
                steps: n,
                distance: None,
                error: Some(e.to_string()),
                seconds: 0.0,
            },
        };
        rows.push(row);
    }
    Ok((reference, rows))
}
