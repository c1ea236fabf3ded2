//! Field snapshots and the text formats written by the CLI.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptive::RunReport;
use crate::error::{MechanicsError, ScenarioError};
use crate::geometry::{Role, Vec3};
use crate::mechanics::{damage_index, SystemState};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub id: usize,
    pub position: Vec3,
    pub displacement: Vec3,
    pub damage: f64,
    pub role: Role,
}

/// Per-particle results for the solved (non-fictitious) particles, by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub dim: usize,
    pub rows: Vec<FieldRow>,
}

impl FieldSnapshot {
    pub fn capture(model: &Model, state: &SystemState) -> Result<Self, MechanicsError> {
        let phi = damage_index(model, state)?;
        let rows = (0..model.num_particles())
            .filter(|&i| model.particles.roles[i] != Role::Constrained)
            .map(|i| FieldRow {
                id: i,
                position: model.particles.positions[i],
                displacement: state.displacement_of(i),
                damage: phi[i],
                role: model.particles.roles[i],
            })
            .collect();
        Ok(Self { dim: model.dim(), rows })
    }

    /// Flattened displacement components, row by row.
    pub fn displacements(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|r| r.displacement[..self.dim].to_vec())
            .collect()
    }

    pub fn damage(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.damage).collect()
    }

    /// `id,x,y[,z],ux,uy[,uz],damage` rows.
    pub fn to_csv(&self) -> String {
        const AXES: [&str; 3] = ["x", "y", "z"];
        let mut out = String::from("id");
        for a in AXES.iter().take(self.dim) {
            out.push(',');
            out.push_str(a);
        }
        for a in AXES.iter().take(self.dim) {
            out.push_str(",u");
            out.push_str(a);
        }
        out.push_str(",damage\n");
        for r in &self.rows {
            write!(out, "{}", r.id).unwrap();
            for v in &r.position[..self.dim] {
                write!(out, ",{v:e}").unwrap();
            }
            for v in &r.displacement[..self.dim] {
                write!(out, ",{v:e}").unwrap();
            }
            writeln!(out, ",{:e}", r.damage).unwrap();
        }
        out
    }

    /// Legacy VTK unstructured grid of vertex cells.
    pub fn to_vtk(&self, title: &str) -> String {
        let n = self.rows.len();
        let mut out = format!("# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {n} double\n");
        for r in &self.rows {
            writeln!(out, "{:e} {:e} {:e}", r.position[0], r.position[1], r.position[2]).unwrap();
        }
        writeln!(out, "CELLS {n} {}", 2 * n).unwrap();
        for k in 0..n {
            writeln!(out, "1 {k}").unwrap();
        }
        writeln!(out, "CELL_TYPES {n}").unwrap();
        for _ in 0..n {
            out.push_str("1\n");
        }
        writeln!(out, "POINT_DATA {n}\nVECTORS displacement double").unwrap();
        for r in &self.rows {
            let u = r.displacement;
            writeln!(out, "{:e} {:e} {:e}", u[0], u[1], u[2]).unwrap();
        }
        out.push_str("SCALARS damage double 1\nLOOKUP_TABLE default\n");
        for r in &self.rows {
            writeln!(out, "{:e}", r.damage).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Csv,
    Vtk,
}

pub fn export_fields(snapshot: &FieldSnapshot, format: FieldFormat, path: &Path) -> Result<(), ScenarioError> {
    let text = match format {
        FieldFormat::Csv => snapshot.to_csv(),
        FieldFormat::Vtk => snapshot.to_vtk("bbpd fields"),
    };
    write_file(path, &text)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, text).map_err(|e| ScenarioError::Write {
        path: path.display().to_string(),
        source: e,
    })
}

/// The report written next to the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub scenario: String,
    /// Time-based deformation share.
    pub r_n: Option<f64>,
    /// Relaxation steps plus Newton load steps.
    pub steps: usize,
    /// Solver seconds, setup excluded.
    pub total_seconds: f64,
    /// Final relative residual or displacement change.
    pub e_achieved: f64,
    #[serde(flatten)]
    pub run: RunReport,
}

impl ReportDocument {
    pub fn new(scenario: &str, run: &RunReport) -> Self {
        let mut run = run.clone();
        run.trace.clear();
        Self {
            scenario: scenario.into(),
            r_n: run.r_n_time,
            steps: run.implicit_steps as usize + run.explicit_steps,
            total_seconds: run.seconds.total(),
            e_achieved: run.final_error,
            run,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }
}

/// `step,e_u` rows.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("step,e_u\n");
    for (k, e) in trace.iter().enumerate() {
        writeln!(out, "{},{e:e}", k + 1).unwrap();
    }
    out
}
