//! Bond graph construction: neighbour search, pre-notching, and correction factors.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::Range;

use crate::error::SetupError;
use crate::geometry::{Notch, ParticleSet};

/// Per-particle neighbour lists stored in compressed form.
///
/// Every undirected bond appears twice (once from each end). Per-bond state
/// such as the alive flag lives on the undirected bond; `bond_of` maps each
/// directed entry to it.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonTable {
    pub horizon: f64,
    pub spacing: f64,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<usize>,
    pub lengths: Vec<f64>,
    pub volume_correction: Vec<f64>,
    pub surface_correction: Vec<f64>,
    pub bond_of: Vec<usize>,
    /// Undirected bonds as `[i, j]` with `i < j`.
    pub bonds: Vec<[usize; 2]>,
    pub alive: Vec<bool>,
}

impl HorizonTable {
    pub fn num_particles(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Directed-entry range of particle `i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_neighbor_count(&self) -> usize {
        (0..self.num_particles())
            .map(|i| self.neighbor_count(i))
            .max()
            .unwrap_or(0)
    }

    pub fn dead_bond_count(&self) -> usize {
        self.alive.iter().filter(|a| !**a).count()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[self.range(i)].binary_search(&j).is_ok()
    }
}

/// Finds every pair with `0 < |x_j − x_i| ≤ δ` by binning particles into
/// cubes of edge `δ`.
pub fn build_horizons(pts: &ParticleSet, horizon: f64) -> Result<HorizonTable, SetupError> {
    if pts.is_empty() {
        return Err(SetupError::EmptyParticleSet);
    }
    if !(horizon > pts.spacing) {
        return Err(SetupError::HorizonTooSmall {
            horizon,
            spacing: pts.spacing,
        });
    }
    let bin_of = |p: &[f64; 3]| -> [i64; 3] { p.map(|c| (c / horizon).floor() as i64) };
    let mut bins: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in pts.positions.iter().enumerate() {
        bins.entry(bin_of(p)).or_default().push(i);
    }
    let reach: [i64; 3] = std::array::from_fn(|a| if a < pts.dim { 1 } else { 0 });

    let mut offsets = Vec::with_capacity(pts.len() + 1);
    let mut neighbors = Vec::new();
    let mut lengths = Vec::new();
    offsets.push(0);
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for (i, p) in pts.positions.iter().enumerate() {
        candidates.clear();
        let b = bin_of(p);
        for dz in -reach[2]..=reach[2] {
            for dy in -reach[1]..=reach[1] {
                for dx in -reach[0]..=reach[0] {
                    let Some(list) = bins.get(&[b[0] + dx, b[1] + dy, b[2] + dz]) else {
                        continue;
                    };
                    for &j in list {
                        if j == i {
                            continue;
                        }
                        let q = &pts.positions[j];
                        let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2))
                            .sqrt();
                        if d > 0.0 && d <= horizon {
                            candidates.push((j, d));
                        }
                    }
                }
            }
        }
        candidates.sort_by_key(|c| c.0);
        for &(j, d) in &candidates {
            neighbors.push(j);
            lengths.push(d);
        }
        offsets.push(neighbors.len());
    }

    // Undirected ids in (i, j) order with i < j.
    let mut bonds = Vec::new();
    let mut bond_of = vec![usize::MAX; neighbors.len()];
    for i in 0..pts.len() {
        for e in offsets[i]..offsets[i + 1] {
            let j = neighbors[e];
            if i < j {
                bond_of[e] = bonds.len();
                bonds.push([i, j]);
            }
        }
    }
    for i in 0..pts.len() {
        for e in offsets[i]..offsets[i + 1] {
            let j = neighbors[e];
            if j < i {
                let back = offsets[j] + neighbors[offsets[j]..offsets[j + 1]]
                    .binary_search(&i)
                    .expect("neighbour search is symmetric");
                bond_of[e] = bond_of[back];
            }
        }
    }

    let n = neighbors.len();
    Ok(HorizonTable {
        horizon,
        spacing: pts.spacing,
        offsets,
        neighbors,
        lengths,
        volume_correction: vec![1.0; n],
        surface_correction: vec![1.0; n],
        bond_of,
        alive: vec![true; bonds.len()],
        bonds,
    })
}

type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: P2, a: P2, b: P2) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection; touching end points count.
pub fn segments_intersect(p1: P2, p2: P2, q1: P2, q2: P2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

fn point_segment_distance(p: P2, a: P2, b: P2) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
}

fn segment_distance(p1: P2, p2: P2, q1: P2, q2: P2) -> f64 {
    if segments_intersect(p1, p2, q1, q2) {
        return 0.0;
    }
    point_segment_distance(p1, q1, q2)
        .min(point_segment_distance(p2, q1, q2))
        .min(point_segment_distance(q1, p1, p2))
        .min(point_segment_distance(q2, p1, p2))
}

/// Clears the alive flag of every bond whose reference segment meets a notch.
///
/// A notch with positive half-width also cuts bonds passing within that
/// distance of its centre line.
pub fn apply_notches(mut table: HorizonTable, pts: &ParticleSet, notches: &[Notch]) -> HorizonTable {
    if notches.is_empty() {
        return table;
    }
    for (b, &[i, j]) in table.bonds.iter().enumerate() {
        let xi = [pts.positions[i][0], pts.positions[i][1]];
        let xj = [pts.positions[j][0], pts.positions[j][1]];
        for n in notches {
            let hit = if n.half_width_m > 0.0 {
                segment_distance(xi, xj, n.start_m, n.end_m) <= n.half_width_m
            } else {
                segments_intersect(xi, xj, n.start_m, n.end_m)
            };
            if hit {
                table.alive[b] = false;
                break;
            }
        }
    }
    table
}

/// How the surface correction factor μ is assigned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfacePolicy {
    /// μ = 1 on every bond.
    #[default]
    Uncorrected,
}

/// Linear partial-volume factor for a bond of reference length `length`.
pub fn volume_correction(length: f64, horizon: f64, spacing: f64) -> f64 {
    let half = 0.5 * spacing;
    if length <= horizon - half {
        1.0
    } else {
        ((horizon + half - length) / spacing).clamp(f64::MIN_POSITIVE, 1.0)
    }
}

/// Assigns ν from the partial-volume band and μ from `policy`.
pub fn correction_factors(mut table: HorizonTable, policy: SurfacePolicy) -> HorizonTable {
    let (delta, dx) = (table.horizon, table.spacing);
    for (nu, &len) in table.volume_correction.iter_mut().zip(&table.lengths) {
        *nu = volume_correction(len, delta, dx);
    }
    match policy {
        SurfacePolicy::Uncorrected => table.surface_correction.iter_mut().for_each(|m| *m = 1.0),
    }
    table
}

/// `S = Σ (N_i + 1) / N²`.
pub fn sparsity_index(table: &HorizonTable) -> Result<f64, SetupError> {
    let n = table.num_particles();
    if n == 0 {
        return Err(SetupError::EmptyParticleSet);
    }
    let filled: usize = (0..n).map(|i| table.neighbor_count(i) + 1).sum();
    Ok(filled as f64 / (n as f64 * n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, BoundaryLayer, GeometrySpec, LayerRole, Side};
    use crate::material::{DimensionMode, MaterialParams};

    fn mat(dim: usize, horizon: f64) -> MaterialParams {
        MaterialParams {
            youngs_modulus: 200e9,
            density: 7850.0,
            mode: match dim {
                1 => DimensionMode::OneD,
                2 => DimensionMode::PlaneStress,
                _ => DimensionMode::ThreeD,
            },
            thickness: None,
            area: None,
            horizon,
        }
    }

    fn lattice(dim: usize, n: usize) -> (ParticleSet, f64) {
        let mut cells = [1; 3];
        for c in cells.iter_mut().take(dim) {
            *c = n;
        }
        let dx = 0.01;
        let spec = GeometrySpec::lattice(dim, cells, dx);
        (build_grid(&spec, &mat(dim, 3.015 * dx)).unwrap(), dx)
    }

    fn center_particle(pts: &ParticleSet, n: usize) -> usize {
        let c = (n / 2) as f64 * pts.spacing + 0.5 * pts.spacing;
        pts.positions
            .iter()
            .position(|p| (0..pts.dim).all(|a| (p[a] - c).abs() < 1e-12))
            .unwrap()
    }

    #[test]
    fn interior_neighbor_counts() {
        for (dim, expected) in [(1, 6), (2, 28), (3, 122)] {
            let n = 9;
            let (pts, dx) = lattice(dim, n);
            let table = build_horizons(&pts, 3.015 * dx).unwrap();
            let c = center_particle(&pts, n);
            assert_eq!(table.neighbor_count(c), expected, "{dim}D");
            assert_eq!(table.max_neighbor_count(), expected);
        }
    }

    #[test]
    fn boundary_particles_have_fewer_neighbors() {
        let (pts, dx) = lattice(2, 9);
        let table = build_horizons(&pts, 3.015 * dx).unwrap();
        assert!(table.neighbor_count(0) < 28);
    }

    #[test]
    fn horizon_not_exceeding_spacing_is_rejected() {
        let (pts, dx) = lattice(2, 3);
        assert!(matches!(
            build_horizons(&pts, dx),
            Err(SetupError::HorizonTooSmall { .. })
        ));
    }

    #[test]
    fn graph_is_symmetric_and_ids_consistent() {
        let (pts, dx) = lattice(2, 7);
        let t = build_horizons(&pts, 3.015 * dx).unwrap();
        for i in 0..t.num_particles() {
            for e in t.range(i) {
                let j = t.neighbors[e];
                assert_ne!(i, j);
                assert!(t.contains(j, i));
                let [a, b] = t.bonds[t.bond_of[e]];
                assert!((a == i && b == j) || (a == j && b == i));
                assert!(t.lengths[e] > 0.0 && t.lengths[e] <= t.horizon);
            }
        }
    }

    #[test]
    fn volume_correction_rule() {
        let dx = 1.0;
        let delta = 3.015;
        assert_eq!(volume_correction(dx, delta, dx), 1.0);
        assert!((volume_correction(3.0, delta, dx) - 0.515).abs() < 1e-12);
        let (pts, dx) = lattice(2, 5);
        let t = correction_factors(build_horizons(&pts, 3.015 * dx).unwrap(), SurfacePolicy::default());
        assert!(t.surface_correction.iter().all(|&m| m == 1.0));
        assert!(t.volume_correction.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn sparsity_small_graphs() {
        let t = HorizonTable {
            horizon: 2.0,
            spacing: 1.0,
            offsets: vec![0, 2, 4, 6],
            neighbors: vec![1, 2, 0, 2, 0, 1],
            lengths: vec![1.0; 6],
            volume_correction: vec![1.0; 6],
            surface_correction: vec![1.0; 6],
            bond_of: vec![0, 1, 0, 2, 1, 2],
            bonds: vec![[0, 1], [0, 2], [1, 2]],
            alive: vec![true; 3],
        };
        assert_eq!(sparsity_index(&t).unwrap(), 1.0);
        let single = HorizonTable {
            offsets: vec![0, 0],
            neighbors: vec![],
            lengths: vec![],
            volume_correction: vec![],
            surface_correction: vec![],
            bond_of: vec![],
            bonds: vec![],
            alive: vec![],
            ..t
        };
        assert_eq!(sparsity_index(&single).unwrap(), 1.0);
    }

    #[test]
    fn bar_sparsity_below_bound() {
        let mut spec = GeometrySpec::lattice(2, [100, 10, 1], 0.005);
        spec.boundaries
            .push(BoundaryLayer::side(Side::Left, 3, LayerRole::Constrained));
        let pts = build_grid(&spec, &mat(2, 3.015 * 0.005)).unwrap();
        let t = build_horizons(&pts, 3.015 * 0.005).unwrap();
        let s = sparsity_index(&t).unwrap();
        let brute: usize = (0..pts.len())
            .map(|i| {
                1 + (0..pts.len())
                    .filter(|&j| {
                        let d = ((pts.positions[i][0] - pts.positions[j][0]).powi(2)
                            + (pts.positions[i][1] - pts.positions[j][1]).powi(2))
                        .sqrt();
                        j != i && d <= 3.015 * 0.005
                    })
                    .count()
            })
            .sum();
        assert_eq!(s, brute as f64 / (1030.0 * 1030.0));
        assert!(s < 29.0 / 1030.0);
    }

    #[test]
    fn segment_intersection_cases() {
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, -1.0], [1.0, 1.0]));
        assert!(segments_intersect([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0]));
        assert!(!segments_intersect([0.0, 0.0], [0.9, 0.0], [1.0, -1.0], [1.0, 1.0]));
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]));
    }

    #[test]
    fn notches_cut_crossing_bonds_only() {
        let (pts, dx) = lattice(2, 10);
        let t = build_horizons(&pts, 3.015 * dx).unwrap();
        let untouched = apply_notches(t.clone(), &pts, &[]);
        assert_eq!(untouched, t);
        let outside = Notch {
            start_m: [1.0, 1.0],
            end_m: [2.0, 2.0],
            half_width_m: 0.0,
        };
        assert_eq!(apply_notches(t.clone(), &pts, &[outside]), t);

        let notch = Notch {
            start_m: [0.05, 0.0],
            end_m: [0.05, 0.03],
            half_width_m: 0.0,
        };
        let cut = apply_notches(t.clone(), &pts, std::slice::from_ref(&notch));
        assert!(cut.dead_bond_count() > 0);
        for (b, &[i, j]) in cut.bonds.iter().enumerate() {
            let (xi, xj) = (pts.positions[i], pts.positions[j]);
            let crosses = (xi[0] - 0.05) * (xj[0] - 0.05) < 0.0 && {
                let t = (0.05 - xi[0]) / (xj[0] - xi[0]);
                xi[1] + t * (xj[1] - xi[1]) <= 0.03
            };
            assert_eq!(!cut.alive[b], crosses, "bond {i}-{j}");
        }
        let twice = apply_notches(cut.clone(), &pts, &[notch]);
        assert_eq!(twice, cut);
    }
}
