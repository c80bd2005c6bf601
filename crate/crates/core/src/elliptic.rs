//! Finite-volume discretization of `−Δu + W u` on a polar grid of the unit disk.
//!
//! Every row is multiplied by its cell area `ρ_j Δρ Δφ`, which makes the matrix
//! symmetric. The inner face of ring 0 sits at the origin and carries no flux.
//! The odd sector uses half of each ring with an antiperiodic wrap
//! `u(m + n_t/2) = −u(m)`.

use crate::grid::{PolarField, PolarGrid};
use crate::linalg::{LinalgError, SparsePattern, SpdMatrix};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("operator is not coercive on this grid")]
    NotCoercive,
    #[error("linear solve did not reach tolerance (relative residual {0:.3e})")]
    SolverBreakdown(f64),
    #[error("field lives on grid {got}, expected {expected}")]
    GridMismatch { expected: String, got: String },
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub const LINEAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Full,
    Odd,
}

/// Assembled operator over the unknowns of one symmetry sector.
#[derive(Debug, Clone)]
pub struct Operator {
    grid: PolarGrid,
    sector: Sector,
    matrix: SpdMatrix,
    areas: Vec<f64>,
    nodes: Vec<(usize, usize)>,
    boundary_coupling: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Copy)]
struct Coefficients {
    inner: f64,
    outer: f64,
    angular: f64,
    area: f64,
}

fn ring_coefficients(grid: &PolarGrid, j: usize) -> Coefficients {
    let dr = grid.dr();
    let dphi = grid.dphi();
    let rho = grid.radius(j);
    let inner_face = j as f64 * dr;
    let outer_face = (j as f64 + 1.0) * dr;
    Coefficients {
        inner: inner_face * dphi / dr,
        outer: outer_face * dphi / dr,
        angular: dr / (rho * dphi),
        area: grid.cell_area(j),
    }
}

type PatternKey = (PolarGrid, Sector);

static PATTERNS: Lazy<Mutex<HashMap<PatternKey, SparsePattern>>> = Lazy::new(|| Mutex::new(HashMap::new()));

struct Layout {
    nodes: Vec<(usize, usize)>,
    node_unknown: Vec<Option<usize>>,
}

fn layout(grid: &PolarGrid, sector: Sector, pinned: Option<&[bool]>) -> Layout {
    let width = match sector {
        Sector::Full => grid.n_t(),
        Sector::Odd => grid.n_t() / 2,
    };
    let mut nodes = Vec::new();
    let mut node_unknown = vec![None; grid.len()];
    for j in 0..grid.n_r() {
        for m in 0..width {
            let node = grid.index(j, m);
            if pinned.is_some_and(|p| p[node]) {
                continue;
            }
            node_unknown[node] = Some(nodes.len());
            nodes.push((j, m));
        }
    }
    Layout { nodes, node_unknown }
}

/// Unknown index and sign of the value at `(j, m)` in the given sector.
fn resolve(grid: &PolarGrid, sector: Sector, lay: &Layout, j: usize, m: usize) -> Option<(usize, f64)> {
    let half = grid.n_t() / 2;
    let (m, sign) = match sector {
        Sector::Full => (m, 1.0),
        Sector::Odd if m >= half => (m - half, -1.0),
        Sector::Odd => (m, 1.0),
    };
    lay.node_unknown[grid.index(j, m)].map(|u| (u, sign))
}

impl Operator {
    /// Assembles `−Δ + W` with Dirichlet rows eliminated. Nodes flagged in
    /// `pinned` (full sector only) are held at zero.
    pub fn assemble(grid: PolarGrid, w: &PolarField, sector: Sector, pinned: Option<&[bool]>) -> Result<Self, EllipticError> {
        if w.grid() != grid {
            return Err(EllipticError::GridMismatch { expected: grid.describe(), got: w.grid().describe() });
        }
        assert!(pinned.is_none() || sector == Sector::Full, "pinned nodes require the full sector");
        let lay = layout(&grid, sector, pinned);
        let n_t = grid.n_t();
        let mut entries = Vec::with_capacity(lay.nodes.len() * 5);
        let mut vals = Vec::with_capacity(lay.nodes.len() * 5);
        let mut areas = Vec::with_capacity(lay.nodes.len());
        let mut boundary_coupling = Vec::new();
        for (row, &(j, m)) in lay.nodes.iter().enumerate() {
            let c = ring_coefficients(&grid, j);
            let diag_at = vals.len();
            entries.push((row, row));
            vals.push(c.inner + c.outer + 2.0 * c.angular + w.at(j, m) * c.area);
            areas.push(c.area);
            // A pinned neighbour puts the zero on the shared face, half a cell away.
            let mut couple = |jj: usize, mm: usize, coef: f64| match resolve(&grid, sector, &lay, jj, mm) {
                Some((col, sign)) if col < row => {
                    entries.push((row, col));
                    vals.push(-coef * sign);
                }
                Some(_) => {}
                None => vals[diag_at] += coef,
            };
            if j > 0 {
                couple(j - 1, m, c.inner);
            }
            couple(j, (m + n_t - 1) % n_t, c.angular);
            couple(j, (m + 1) % n_t, c.angular);
            if j + 1 < grid.n_r() {
                couple(j + 1, m, c.outer);
            }
            if j + 1 == grid.n_r() {
                boundary_coupling.push((row, m, c.outer));
            }
        }
        // Each off-diagonal pair is entered once, from its later row.
        let n = lay.nodes.len();
        let pattern = if pinned.is_none() {
            let mut cache = PATTERNS.lock().expect("pattern cache poisoned");
            cache
                .entry((grid, sector))
                .or_insert_with(|| SparsePattern::from_entries(n, &entries))
                .clone()
        } else {
            SparsePattern::from_entries(n, &entries)
        };
        let matrix = pattern.assemble(&vals);
        Ok(Self { grid, sector, matrix, areas, nodes: lay.nodes, boundary_coupling })
    }

    pub fn grid(&self) -> PolarGrid {
        self.grid
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn matrix(&self) -> &SpdMatrix {
        &self.matrix
    }

    pub fn unknown_count(&self) -> usize {
        self.nodes.len()
    }

    /// Cell areas of the unknowns (the lumped mass for unit weight).
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    /// Right-hand side produced by the boundary values and an optional source.
    pub fn rhs(&self, boundary: &[f64], source: Option<&PolarField>) -> Vec<f64> {
        let mut b = vec![0.0; self.unknown_count()];
        for &(row, m, coef) in &self.boundary_coupling {
            b[row] += coef * boundary[m];
        }
        if let Some(f) = source {
            for (row, &(j, m)) in self.nodes.iter().enumerate() {
                b[row] += f.at(j, m) * self.areas[row];
            }
        }
        b
    }

    /// Gathers the unknowns of a field.
    pub fn gather(&self, f: &PolarField) -> Vec<f64> {
        self.nodes.iter().map(|&(j, m)| f.at(j, m)).collect()
    }

    /// Scatters unknowns into a field with the given boundary values.
    pub fn scatter(&self, x: &[f64], boundary: &[f64]) -> PolarField {
        let g = self.grid;
        let half = g.n_t() / 2;
        let mut values = vec![0.0; g.len()];
        for (k, &(j, m)) in self.nodes.iter().enumerate() {
            values[g.index(j, m)] = x[k];
            if self.sector == Sector::Odd {
                values[g.index(j, m + half)] = -x[k];
            }
        }
        PolarField::from_parts(g, values, boundary.to_vec()).expect("shape fixed by grid")
    }

    /// Solves with boundary data and optional source; one refinement step
    /// guards the residual.
    pub fn solve(&self, boundary: &[f64], source: Option<&PolarField>) -> Result<PolarField, EllipticError> {
        let b = self.rhs(boundary, source);
        let x = self.solve_vec(&b)?;
        let boundary = match self.sector {
            Sector::Full => boundary.to_vec(),
            Sector::Odd => odd_boundary(boundary),
        };
        Ok(self.scatter(&x, &boundary))
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, EllipticError> {
        let factor = self.matrix.factor().map_err(|e| match e {
            LinalgError::NotPositiveDefinite => EllipticError::NotCoercive,
            other => EllipticError::Linalg(other),
        })?;
        let mut x = factor.solve(b);
        let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
        let mut res = residual(&self.matrix, &x, b);
        let mut rel = res.iter().fold(0.0f64, |s, v| s.max(v.abs())) / scale;
        if rel > LINEAR_TOL {
            let dx = factor.solve(&res);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            res = residual(&self.matrix, &x, b);
            rel = res.iter().fold(0.0f64, |s, v| s.max(v.abs())) / scale;
        }
        if rel > 1e-9 || !rel.is_finite() {
            return Err(EllipticError::SolverBreakdown(rel));
        }
        Ok(x)
    }
}

fn residual(a: &SpdMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

fn odd_boundary(boundary: &[f64]) -> Vec<f64> {
    let n = boundary.len();
    (0..n).map(|m| 0.5 * (boundary[m] - boundary[(m + n / 2) % n])).collect()
}

pub fn assemble_operator(grid: PolarGrid, w: &PolarField) -> Result<Operator, EllipticError> {
    Operator::assemble(grid, w, Sector::Full, None)
}

/// Solves `−Δu + W u = 0` with Dirichlet data sampled at the boundary angles.
pub fn solve_dirichlet(grid: PolarGrid, w: &PolarField, boundary: &[f64]) -> Result<PolarField, EllipticError> {
    Operator::assemble(grid, w, Sector::Full, None)?.solve(boundary, None)
}

/// Odd-sector solve: equivalent to `project_odd(solve_dirichlet(..))` when `W`
/// is even, at half the cost. The boundary data are projected first.
pub fn solve_dirichlet_odd(grid: PolarGrid, w: &PolarField, boundary: &[f64]) -> Result<PolarField, EllipticError> {
    Operator::assemble(grid, w, Sector::Odd, None)?.solve(&odd_boundary(boundary), None)
}

/// Solves `−Δu + W u = f`.
pub fn solve_with_source(grid: PolarGrid, w: &PolarField, f: &PolarField, boundary: &[f64]) -> Result<PolarField, EllipticError> {
    Operator::assemble(grid, w, Sector::Full, None)?.solve(boundary, Some(f))
}

/// `(f(ρ,φ) − f(ρ,φ+π)) / 2`.
pub fn project_odd(f: &PolarField) -> PolarField {
    let g = f.grid();
    let half = g.n_t() / 2;
    let mut values = vec![0.0; g.len()];
    for j in 0..g.n_r() {
        for m in 0..g.n_t() {
            values[g.index(j, m)] = 0.5 * (f.at(j, m) - f.at(j, (m + half) % g.n_t()));
        }
    }
    PolarField::from_parts(g, values, odd_boundary(f.boundary())).expect("shape fixed by grid")
}

/// Pointwise discrete `−Δ_h u + W u` at interior nodes (boundary values taken from the field).
pub fn apply_operator(u: &PolarField, w: &PolarField) -> PolarField {
    let g = u.grid();
    let n_t = g.n_t();
    let mut out = vec![0.0; g.len()];
    for j in 0..g.n_r() {
        let c = ring_coefficients(&g, j);
        for m in 0..n_t {
            let v = u.at(j, m);
            let mut acc = c.outer * (v - u.at(j + 1, m)) + c.angular * (2.0 * v - u.at(j, (m + 1) % n_t) - u.at(j, (m + n_t - 1) % n_t));
            if j > 0 {
                acc += c.inner * (v - u.at(j - 1, m));
            }
            out[g.index(j, m)] = acc / c.area + w.at(j, m) * v;
        }
    }
    PolarField::from_parts(g, out, vec![0.0; n_t]).expect("shape fixed by grid")
}

/// Discrete `∫(|∇f|² + W f²)`: face differences for the gradient, cell areas for the potential term.
pub fn dirichlet_energy(f: &PolarField, w: &PolarField) -> f64 {
    energy_with_faces(f, w, |_, _| 1.0)
}

/// Energy of a field held at zero on `pinned` nodes, with the zero placed on the
/// faces between free and pinned nodes as in [`Operator::assemble`].
pub fn pinned_energy(f: &PolarField, w: &PolarField, pinned: &[bool]) -> f64 {
    let held = |node: Option<usize>| node.is_some_and(|k| pinned[k]);
    energy_with_faces(f, w, |p, q| match (held(p), held(q)) {
        (true, true) => 0.0,
        (false, false) => 1.0,
        _ if p.is_none() || q.is_none() => 1.0,
        _ => 2.0,
    })
}

/// Face weights are looked up by the node indices on either side (`None` on the boundary circle).
fn energy_with_faces(f: &PolarField, w: &PolarField, weight: impl Fn(Option<usize>, Option<usize>) -> f64) -> f64 {
    let g = f.grid();
    let n_t = g.n_t();
    let node = |j: usize, m: usize| (j < g.n_r()).then(|| g.index(j, m));
    let mut e = 0.0;
    for j in 0..g.n_r() {
        let c = ring_coefficients(&g, j);
        for m in 0..n_t {
            let v = f.at(j, m);
            let here = node(j, m);
            let dr = f.at(j + 1, m) - v;
            let dt = f.at(j, (m + 1) % n_t) - v;
            e += c.outer * weight(here, node(j + 1, m)) * dr * dr
                + c.angular * weight(here, node(j, (m + 1) % n_t)) * dt * dt
                + w.at(j, m) * v * v * c.area;
        }
    }
    // Layer between the outermost face and the boundary circle; it only involves
    // boundary values, so minimizers of the discrete form are unaffected.
    let width = 1.0 - g.n_r() as f64 * g.dr();
    let mid = 1.0 - 0.5 * width;
    let angular = width / (mid * g.dphi());
    let area = mid * width * g.dphi();
    let j = g.n_r();
    for m in 0..n_t {
        let v = f.at(j, m);
        let dt = f.at(j, (m + 1) % n_t) - v;
        e += angular * dt * dt + w.at(j, m) * v * v * area;
    }
    e
}

/// Smallest Dirichlet eigenvalue of `−Δ + W` (unit mass); positive iff the operator is coercive on the grid.
pub fn check_coercive(grid: PolarGrid, w: &PolarField) -> Result<f64, EllipticError> {
    let mass = PolarField::from_fn(grid, |_| 1.0);
    let spec = crate::eigen::generalized_eigs(grid, w, &mass, Sector::Full, 1)?;
    Ok(spec.eigenvalues[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero(grid: PolarGrid) -> PolarField {
        PolarField::zeros(grid)
    }

    fn boundary_of(grid: PolarGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..grid.n_t()).map(|m| f(grid.angle(m))).collect()
    }

    #[test]
    fn operator_annihilates_constants_and_linear() {
        let one_level = |n: usize| {
            let g = PolarGrid::new(n, 2 * n).unwrap();
            let one = PolarField::from_fn(g, |_| 1.0);
            assert!(apply_operator(&one, &zero(g)).sup_norm() < 1e-9);
            let lin = PolarField::from_fn(g, |y| y.re);
            let r = apply_operator(&lin, &zero(g));
            // Polar truncation error grows like 1/ρ towards the centre; weight it out.
            (0..g.n_r())
                .flat_map(|j| (0..g.n_t()).map(move |m| (j, m)))
                .map(|(j, m)| (r.at(j, m) * g.radius(j)).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = one_level(32);
        let fine = one_level(64);
        assert!(coarse < 0.01, "{coarse}");
        assert!(fine < 0.3 * coarse, "{coarse} {fine}");
    }

    #[test]
    fn harmonic_boundary_data() {
        let g = PolarGrid::new(64, 128).unwrap();
        let u = solve_dirichlet(g, &zero(g), &boundary_of(g, f64::cos)).unwrap();
        let exact = PolarField::from_fn(g, |y| y.re);
        assert!(u.max_abs_diff(&exact) < 5e-4, "{}", u.max_abs_diff(&exact));

        let u3 = solve_dirichlet(g, &zero(g), &boundary_of(g, |t| (3.0 * t).cos())).unwrap();
        let exact3 = PolarField::from_fn(g, |y| (y * y * y).re);
        assert!(u3.max_abs_diff(&exact3) < 2e-3, "{}", u3.max_abs_diff(&exact3));
    }

    #[test]
    fn odd_sector_matches_full_solve() {
        let g = PolarGrid::new(24, 48).unwrap();
        let w = PolarField::from_fn(g, |y| 4.0 * y.norm_sqr() * (1.0 + 0.5 * (y * y).re));
        let data = boundary_of(g, |t| t.cos() + 0.3 * (3.0 * t).sin() + 0.2 * (2.0 * t).cos());
        let full = project_odd(&solve_dirichlet(g, &w, &data).unwrap());
        let odd = solve_dirichlet_odd(g, &w, &data).unwrap();
        assert!(full.max_abs_diff(&odd) < 1e-12);
        let odd_data = boundary_of(g, |t| t.cos() + 0.3 * (3.0 * t).sin());
        let u = solve_dirichlet(g, &w, &odd_data).unwrap();
        assert!(project_odd(&u).max_abs_diff(&u) < 1e-10);
    }

    #[test]
    fn projection_is_idempotent() {
        let g = PolarGrid::new(8, 16).unwrap();
        let even = PolarField::from_fn(g, |y| (y * y).re / y.norm_sqr().max(1e-30));
        assert!(project_odd(&even).sup_norm() < 1e-14);
        let odd = PolarField::from_fn(g, |y| y.re / y.norm());
        assert!(project_odd(&odd).max_abs_diff(&odd) < 1e-15);
        let mixed = PolarField::from_fn(g, |y| (7.0 * y.re + 3.0 * y.im * y.im).sin());
        let p = project_odd(&mixed);
        assert_eq!(project_odd(&p), p);
    }

    #[test]
    fn energy_of_linear_field() {
        let g = PolarGrid::new(96, 192).unwrap();
        let f = PolarField::from_fn(g, |y| y.re);
        let e = dirichlet_energy(&f, &zero(g));
        assert!((e - std::f64::consts::PI).abs() < 0.01 * std::f64::consts::PI, "{e}");
        let c = PolarField::from_fn(g, |_| 2.5);
        assert!(dirichlet_energy(&c, &zero(g)).abs() < 1e-12);
    }

    #[test]
    fn not_coercive_is_refused() {
        let g = PolarGrid::new(16, 32).unwrap();
        let w = PolarField::from_fn(g, |_| -10.0);
        let err = solve_dirichlet(g, &w, &boundary_of(g, f64::cos)).unwrap_err();
        assert_eq!(err, EllipticError::NotCoercive);
    }

    #[test]
    fn energy_of_harmonic_polynomial_is_second_order() {
        let err = |n: usize| {
            let g = PolarGrid::new(n, 2 * n).unwrap();
            let u = PolarField::from_fn(g, |y| y.norm().powi(3) * (3.0 * y.arg()).cos());
            (dirichlet_energy(&u, &zero(g)) - 3.0 * std::f64::consts::PI).abs()
        };
        let ratio = err(24) / err(48);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }
}
