//! Uniform particle lattices with holes and boundary layers.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::SetupError;
use crate::material::MaterialParams;

pub type Vec3 = [f64; 3];

/// Domain face a boundary layer is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// −x
    Left,
    /// +x
    Right,
    /// −y
    Bottom,
    /// +y
    Top,
    /// −z
    Back,
    /// +z
    Front,
}

impl Side {
    pub fn normal_axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
            Side::Back | Side::Front => 2,
        }
    }

    fn is_low(self) -> bool {
        matches!(self, Side::Left | Side::Bottom | Side::Back)
    }

    /// Axis a span restriction is measured along.
    pub fn tangent_axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 1,
            Side::Bottom | Side::Top | Side::Back | Side::Front => 0,
        }
    }
}

/// Circular hole (a cylinder through the thickness in 3D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    pub center_m: [f64; 2],
    pub radius_m: f64,
}

/// Straight pre-crack in the x–y plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Notch {
    pub start_m: [f64; 2],
    pub end_m: [f64; 2],
    #[serde(default)]
    pub half_width_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    /// Prescribed displacement on the listed axes; excluded from the solve.
    Constrained,
    /// Solved particles that carry a body force.
    Load,
}

/// A boundary region: either a strip along a domain face or a rim around a hole.
///
/// Constrained face strips are appended outside the domain; load strips mark
/// the outermost real particles. Constrained hole rims keep the particles just
/// inside the hole as a rigid pin; load rims mark the particles just outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryLayer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole: Option<usize>,
    pub layers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_center_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_width_m: Option<f64>,
    pub role: LayerRole,
    /// Axes whose displacement is prescribed (constrained layers only).
    #[serde(default = "all_axes")]
    pub axes: [bool; 3],
    /// Displacement reached at full load (constrained layers).
    #[serde(default)]
    pub displacement_m: Vec3,
    /// Body force density at full load (load layers).
    #[serde(default)]
    pub body_force_n_per_m3: Vec3,
}

fn all_axes() -> [bool; 3] {
    [true; 3]
}

impl BoundaryLayer {
    pub fn side(side: Side, layers: usize, role: LayerRole) -> Self {
        Self {
            side: Some(side),
            hole: None,
            layers,
            span_center_m: None,
            span_width_m: None,
            role,
            axes: all_axes(),
            displacement_m: [0.0; 3],
            body_force_n_per_m3: [0.0; 3],
        }
    }

    pub fn hole_rim(hole: usize, layers: usize, role: LayerRole) -> Self {
        Self {
            hole: Some(hole),
            side: None,
            ..Self::side(Side::Left, layers, role)
        }
    }

    pub fn with_span(mut self, center_m: f64, width_m: f64) -> Self {
        self.span_center_m = Some(center_m);
        self.span_width_m = Some(width_m);
        self
    }

    pub fn with_axes(mut self, axes: [bool; 3]) -> Self {
        self.axes = axes;
        self
    }

    pub fn with_displacement(mut self, d: Vec3) -> Self {
        self.displacement_m = d;
        self
    }

    pub fn with_body_force(mut self, b: Vec3) -> Self {
        self.body_force_n_per_m3 = b;
        self
    }

    fn in_span(&self, coord: f64, tol: f64) -> bool {
        match (self.span_center_m, self.span_width_m) {
            (Some(c), Some(w)) => coord >= c - 0.5 * w - tol && coord < c + 0.5 * w - tol,
            _ => true,
        }
    }
}

/// Declarative description of the discretised domain `[0, l]×[0, w]×[0, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub dimension: usize,
    /// Length, width, height; unused axes are ignored.
    pub extent_m: Vec3,
    pub cells: [usize; 3],
    pub spacing_m: f64,
    #[serde(default)]
    pub holes: Vec<Hole>,
    #[serde(default)]
    pub notches: Vec<Notch>,
    #[serde(default)]
    pub boundaries: Vec<BoundaryLayer>,
}

impl GeometrySpec {
    /// Box lattice with `cells` per axis; extents follow from the spacing.
    pub fn lattice(dimension: usize, cells: [usize; 3], spacing_m: f64) -> Self {
        let mut extent_m = [0.0; 3];
        for a in 0..dimension {
            extent_m[a] = cells[a] as f64 * spacing_m;
        }
        Self {
            dimension,
            extent_m,
            cells,
            spacing_m,
            holes: Vec::new(),
            notches: Vec::new(),
            boundaries: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SetupError> {
        if !(1..=3).contains(&self.dimension) {
            return Err(SetupError::InvalidGeometry(format!(
                "dimension must be 1, 2 or 3, got {}",
                self.dimension
            )));
        }
        let dx = self.spacing_m;
        if !(dx.is_finite() && dx > 0.0) {
            return Err(SetupError::InvalidGeometry(format!(
                "grid spacing must be positive, got {dx}"
            )));
        }
        for a in 0..3 {
            if a < self.dimension {
                if self.cells[a] == 0 || !(self.extent_m[a] > 0.0) {
                    return Err(SetupError::DegenerateDomain(format!(
                        "axis {a} has {} cells and extent {} m",
                        self.cells[a], self.extent_m[a]
                    )));
                }
                let implied = self.cells[a] as f64 * dx;
                if (implied - self.extent_m[a]).abs() > 1e-6 * self.extent_m[a].max(dx) {
                    return Err(SetupError::InvalidGeometry(format!(
                        "axis {a}: {} cells × {dx} m ≠ extent {} m",
                        self.cells[a], self.extent_m[a]
                    )));
                }
            } else if self.cells[a] != 1 {
                return Err(SetupError::InvalidGeometry(format!(
                    "axis {a} is unused in {}D and must have exactly one cell",
                    self.dimension
                )));
            }
        }
        for (k, h) in self.holes.iter().enumerate() {
            if !(h.radius_m > 0.0) {
                return Err(SetupError::InvalidGeometry(format!(
                    "hole {k} has non-positive radius {}",
                    h.radius_m
                )));
            }
            if self.dimension < 2 {
                return Err(SetupError::InvalidGeometry("holes need at least 2D".into()));
            }
        }
        for (k, n) in self.notches.iter().enumerate() {
            if self.dimension != 2 {
                return Err(SetupError::InvalidGeometry("notches are 2D segments".into()));
            }
            if n.half_width_m < 0.0 {
                return Err(SetupError::InvalidGeometry(format!(
                    "notch {k} has negative half-width"
                )));
            }
        }
        for (k, b) in self.boundaries.iter().enumerate() {
            if b.layers == 0 {
                return Err(SetupError::InvalidGeometry(format!(
                    "boundary layer {k} needs at least one layer"
                )));
            }
            match (b.side, b.hole) {
                (Some(side), None) => {
                    if side.normal_axis() >= self.dimension {
                        return Err(SetupError::InvalidGeometry(format!(
                            "boundary layer {k}: side {side:?} does not exist in {}D",
                            self.dimension
                        )));
                    }
                }
                (None, Some(h)) => {
                    if h >= self.holes.len() {
                        return Err(SetupError::InvalidGeometry(format!(
                            "boundary layer {k} references missing hole {h}"
                        )));
                    }
                }
                _ => {
                    return Err(SetupError::InvalidGeometry(format!(
                        "boundary layer {k} must name exactly one of `side` or `hole`"
                    )))
                }
            }
            if b.span_center_m.is_some() != b.span_width_m.is_some() {
                return Err(SetupError::InvalidGeometry(format!(
                    "boundary layer {k}: span needs both centre and width"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Real,
    Constrained,
    Load,
}

/// The discrete material points of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub dim: usize,
    pub spacing: f64,
    pub positions: Vec<Vec3>,
    pub volumes: Vec<f64>,
    pub densities: Vec<f64>,
    pub roles: Vec<Role>,
    /// Index into the geometry's boundary list, if the particle belongs to one.
    pub groups: Vec<Option<usize>>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    /// Reorders particles so that new particle `k` is old particle `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> ParticleSet {
        assert_eq!(perm.len(), self.len());
        ParticleSet {
            dim: self.dim,
            spacing: self.spacing,
            positions: perm.iter().map(|&p| self.positions[p]).collect(),
            volumes: perm.iter().map(|&p| self.volumes[p]).collect(),
            densities: perm.iter().map(|&p| self.densities[p]).collect(),
            roles: perm.iter().map(|&p| self.roles[p]).collect(),
            groups: perm.iter().map(|&p| self.groups[p]).collect(),
        }
    }
}

fn planar_distance(p: &Vec3, c: &[f64; 2]) -> f64 {
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
}

/// Places particles at the cell centres of the lattice, removes hole
/// interiors, and attaches the boundary layers.
pub fn build_grid(spec: &GeometrySpec, mat: &MaterialParams) -> Result<ParticleSet, SetupError> {
    spec.validate()?;
    let dim = spec.dimension;
    let dx = spec.spacing_m;
    let tol = 1e-9 * dx;
    let mat = mat.clone().resolved(dx);
    let volume = match dim {
        1 => dx * mat.area.unwrap_or(dx * dx),
        2 => dx * dx * mat.thickness.unwrap_or(dx),
        _ => dx * dx * dx,
    };
    let center = |k: i64| (k as f64 + 0.5) * dx;
    let coords = |key: [i64; 3]| {
        let mut p = [0.0; 3];
        for a in 0..dim {
            p[a] = center(key[a]);
        }
        p
    };

    let mut keys: Vec<[i64; 3]> = Vec::new();
    let mut roles = Vec::new();
    let mut groups: Vec<Option<usize>> = Vec::new();
    let [nx, ny, nz] = spec.cells.map(|c| c as i64);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let key = [i, j, k];
                let p = coords(key);
                let mut keep = Some((Role::Real, None));
                for (h, hole) in spec.holes.iter().enumerate() {
                    let r = planar_distance(&p, &hole.center_m);
                    if r < hole.radius_m - tol {
                        keep = spec
                            .boundaries
                            .iter()
                            .enumerate()
                            .find(|(_, b)| {
                                b.hole == Some(h)
                                    && b.role == LayerRole::Constrained
                                    && r >= hole.radius_m - b.layers as f64 * dx - tol
                            })
                            .map(|(g, _)| (Role::Constrained, Some(g)));
                        break;
                    }
                }
                if let Some((role, group)) = keep {
                    keys.push(key);
                    roles.push(role);
                    groups.push(group);
                }
            }
        }
    }
    if !roles.iter().any(|&r| r == Role::Real) {
        return Err(SetupError::EmptyDomain);
    }

    // Load regions mark existing real particles.
    for (g, b) in spec.boundaries.iter().enumerate() {
        if b.role != LayerRole::Load {
            continue;
        }
        for idx in 0..keys.len() {
            let p = coords(keys[idx]);
            let inside = match (b.side, b.hole) {
                (Some(side), _) => {
                    let a = side.normal_axis();
                    let n = spec.cells[a] as i64;
                    let k = keys[idx][a];
                    let outer = if side.is_low() {
                        k < b.layers as i64
                    } else {
                        k >= n - b.layers as i64
                    };
                    outer && b.in_span(p[side.tangent_axis()], tol)
                }
                (None, Some(h)) => {
                    let hole = &spec.holes[h];
                    let r = planar_distance(&p, &hole.center_m);
                    r >= hole.radius_m - tol && r < hole.radius_m + b.layers as f64 * dx - tol
                }
                _ => unreachable!("validated"),
            };
            if !inside {
                continue;
            }
            if roles[idx] != Role::Real {
                return Err(SetupError::OverlappingLayers {
                    first: groups[idx].unwrap_or(g),
                    second: g,
                });
            }
            roles[idx] = Role::Load;
            groups[idx] = Some(g);
        }
    }

    // Constrained face strips are appended outside the domain.
    let mut occupied: HashSet<[i64; 3]> = keys.iter().copied().collect();
    let mut owner: std::collections::HashMap<[i64; 3], usize> = Default::default();
    for (g, b) in spec.boundaries.iter().enumerate() {
        let Some(side) = b.side else { continue };
        if b.role != LayerRole::Constrained {
            continue;
        }
        let a = side.normal_axis();
        let n = spec.cells[a] as i64;
        let normal_range: Vec<i64> = if side.is_low() {
            (1..=b.layers as i64).map(|l| -l).collect()
        } else {
            (0..b.layers as i64).map(|l| n + l).collect()
        };
        let ranges: [Vec<i64>; 3] = std::array::from_fn(|ax| {
            if ax == a {
                normal_range.clone()
            } else {
                (0..spec.cells[ax] as i64).collect()
            }
        });
        for &k in &ranges[2] {
            for &j in &ranges[1] {
                for &i in &ranges[0] {
                    let key = [i, j, k];
                    let p = coords(key);
                    if !b.in_span(p[side.tangent_axis()], tol) {
                        continue;
                    }
                    if !occupied.insert(key) {
                        return Err(SetupError::OverlappingLayers {
                            first: *owner.get(&key).unwrap_or(&g),
                            second: g,
                        });
                    }
                    owner.insert(key, g);
                    keys.push(key);
                    roles.push(Role::Constrained);
                    groups.push(Some(g));
                }
            }
        }
    }

    let n = keys.len();
    Ok(ParticleSet {
        dim,
        spacing: dx,
        positions: keys.into_iter().map(coords).collect(),
        volumes: vec![volume; n],
        densities: vec![mat.density; n],
        roles,
        groups,
    })
}
