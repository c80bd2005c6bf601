//! Eigenvalues of the operator with half-integer circulation as functions of the pole.

use crate::eigen::{generalized_eigs, SpectrumResult};
use crate::elliptic::{EllipticError, Sector};
use crate::geometry::{composite_weight, GeometryError, PolePosition};
use crate::grid::{GridLevel, PolarField, PolarGrid};
use crate::nodal::{leading_order, pole_rays, to_pole_chart, AsymptoticCoeffs, LeadingOrder, NodalError};
use crate::potential::Potential;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

/// First zero of `J₀`.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;
/// First positive zero of `J_{3/2}`, the root of `tan x = x`.
pub const BESSEL_J32_FIRST_ZERO: f64 = 4.493_409_457_909_064;
/// Relative gap separating clusters.
pub const CLUSTER_GAP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nodal(#[from] NodalError),
    #[error("level {level} belongs to a cluster of size {size}; select a member")]
    ClusterAmbiguity { level: usize, size: usize },
    #[error("level {level} out of range (computed {count})")]
    LevelOutOfRange { level: usize, count: usize },
}

/// Lowest Dirichlet eigenvalue of the unit disk.
pub fn disk_first_eigenvalue() -> f64 {
    BESSEL_J0_FIRST_ZERO * BESSEL_J0_FIRST_ZERO
}

/// First `count` eigenvalues for the pole `a`, computed on the odd sector of the reference disk.
pub fn ab_eigenvalues(grid: PolarGrid, a: PolePosition, potential: &Potential, count: usize) -> Result<SpectrumResult, SpectrumError> {
    let mass = PolarField::from_fn(grid, |y| composite_weight(a, y));
    let w = potential.reference_field(a, grid);
    let mut s = generalized_eigs(grid, &w, &mass, Sector::Odd, count)?;
    s.weight_id = format!("pole=({:.6},{:.6}) potential={}", a.z().re, a.z().im, potential.spec());
    Ok(s)
}

/// Dirichlet eigenvalues of `−Δ` on the plain disk.
pub fn disk_eigenvalues(grid: PolarGrid, count: usize) -> Result<SpectrumResult, SpectrumError> {
    let mass = PolarField::from_fn(grid, |_| 1.0);
    Ok(generalized_eigs(grid, &PolarField::zeros(grid), &mass, Sector::Full, count)?)
}

/// Size of the gap cluster containing the 1-based `level`.
pub fn multiplicity_estimate(s: &SpectrumResult, level: usize) -> usize {
    s.clusters(CLUSTER_GAP).into_iter().find(|c| c.contains(&(level - 1))).map_or(0, |c| c.len())
}

/// Nodal arcs of an eigenfunction ending at the pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenNodalCount {
    pub level: usize,
    pub member: usize,
    pub arcs_at_pole: usize,
    pub leading_order: u32,
    pub first: AsymptoticCoeffs,
    pub third: AsymptoticCoeffs,
}

/// Arcs at the pole for the eigenfield at `level` (1-based). A degenerate level needs
/// an explicit `member` (1-based index within the whole spectrum).
pub fn eigenfunction_nodal_count(
    s: &SpectrumResult,
    level: usize,
    a: PolePosition,
    member: Option<usize>,
) -> Result<EigenNodalCount, SpectrumError> {
    if level == 0 || level > s.eigenvalues.len() {
        return Err(SpectrumError::LevelOutOfRange { level, count: s.eigenvalues.len() });
    }
    let cluster = s.clusters(CLUSTER_GAP).into_iter().find(|c| c.contains(&(level - 1))).unwrap_or_default();
    let index = match member {
        Some(m) if m >= 1 && cluster.contains(&(m - 1)) => m - 1,
        Some(m) => return Err(SpectrumError::LevelOutOfRange { level: m, count: s.eigenvalues.len() }),
        None if cluster.len() > 1 => return Err(SpectrumError::ClusterAmbiguity { level, size: cluster.len() }),
        None => level - 1,
    };
    let u = &s.eigenfields[index];
    let tol = 1e-4 * u.sup_norm();
    let reference = leading_order(u, tol)?;
    let (c1, c3) = to_pole_chart(a, reference.first.complex(), reference.third.complex());
    let leading = LeadingOrder { order: reference.order, first: AsymptoticCoeffs::new(1, c1), third: AsymptoticCoeffs::new(3, c3) };
    let arcs_at_pole = pole_rays(u, a, &leading);
    Ok(EigenNodalCount {
        level,
        member: index + 1,
        arcs_at_pole,
        leading_order: leading.order,
        first: leading.first,
        third: leading.third,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeRow {
    pub a: Complex64,
    /// Extrapolated eigenvalues (raw values when only one level is used).
    pub eigenvalues: Vec<f64>,
    /// Raw values per grid level, finest last.
    pub raw: Vec<Vec<f64>>,
    pub multiplicity_first: usize,
}

/// Eigenvalue table over pole positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenLandscape {
    pub rows: Vec<LandscapeRow>,
    pub levels: Vec<String>,
    pub disk_reference: f64,
    /// Row index of the largest first eigenvalue.
    pub maximizer: usize,
}

impl EigenLandscape {
    pub fn first(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eigenvalues[0]).collect()
    }

    pub fn maximizer_position(&self) -> Complex64 {
        self.rows[self.maximizer].a
    }

    pub fn above_disk(&self) -> bool {
        self.rows.iter().all(|r| r.eigenvalues[0] > self.disk_reference)
    }

    pub fn to_csv(&self) -> String {
        let m = self.rows.first().map_or(0, |r| r.eigenvalues.len());
        let mut out = String::from("a1,a2");
        for k in 1..=m {
            let _ = write!(out, ",lambda{k}");
        }
        out.push_str(",mult1\n");
        for r in &self.rows {
            let _ = write!(out, "{:.6},{:.6}", r.a.re, r.a.im);
            for l in &r.eigenvalues {
                let _ = write!(out, ",{l:.10}");
            }
            let _ = writeln!(out, ",{}", r.multiplicity_first);
        }
        out
    }
}

/// Eigenvalues over `points`. With two levels `h` and `h/2` the table holds the
/// second-order extrapolation `λ_f + (λ_f − λ_c)/3`; a single level is tabulated raw.
pub fn eigen_landscape(
    points: &[Complex64],
    levels: &[GridLevel],
    potential: &Potential,
    count: usize,
) -> Result<EigenLandscape, SpectrumError> {
    let rows: Result<Vec<LandscapeRow>, SpectrumError> = points
        .par_iter()
        .map(|&z| {
            let a = PolePosition::from_complex(z)?;
            let mut raw = Vec::new();
            let mut mult = 0;
            for l in levels {
                let s = ab_eigenvalues(l.grid(), a, potential, count)?;
                mult = multiplicity_estimate(&s, 1);
                raw.push(s.eigenvalues);
            }
            let eigenvalues = match raw.as_slice() {
                [.., c, f] => c.iter().zip(f).map(|(c, f)| f + (f - c) / 3.0).collect(),
                [f] => f.clone(),
                [] => Vec::new(),
            };
            Ok(LandscapeRow { a: z, eigenvalues, raw, multiplicity_first: mult })
        })
        .collect();
    let rows = rows?;
    let maximizer = rows
        .iter()
        .enumerate()
        .max_by(|p, q| p.1.eigenvalues[0].total_cmp(&q.1.eigenvalues[0]))
        .map_or(0, |p| p.0);
    Ok(EigenLandscape {
        rows,
        levels: levels.iter().map(|l| l.name().to_string()).collect(),
        disk_reference: disk_first_eigenvalue(),
        maximizer,
    })
}

/// Grid pair used for extrapolation at a given working level.
pub fn extrapolation_pair(level: GridLevel) -> [GridLevel; 2] {
    match level {
        GridLevel::Coarse => [GridLevel::Coarse, GridLevel::Default],
        _ => [GridLevel::Default, GridLevel::Fine],
    }
}

/// Radial pole positions `0, step, …` up to `max`.
pub fn radial_points(step: f64, max: f64) -> Vec<Complex64> {
    let n = (max / step + 1e-9).floor() as usize;
    (0..=n).map(|k| Complex64::new(k as f64 * step, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> PolarGrid {
        PolarGrid::new(48, 96).unwrap()
    }

    #[test]
    fn center_spectrum_matches_half_integer_bessel() {
        let s = ab_eigenvalues(grid(), PolePosition::origin(), &Potential::Constant(0.0), 4).unwrap();
        let pi2 = PI * PI;
        assert!((s.eigenvalues[0] / pi2 - 1.0).abs() < 0.01, "{:?}", s.eigenvalues);
        assert_eq!(multiplicity_estimate(&s, 1), 2);
        assert_eq!(multiplicity_estimate(&s, 3), 2);
        let j = BESSEL_J32_FIRST_ZERO;
        assert!((j.tan() - j).abs() < 1e-9);
        assert!((s.eigenvalues[2] / (j * j) - 1.0).abs() < 0.02);
    }

    #[test]
    fn off_center_splits_ground_pair() {
        let a = PolePosition::new(0.4, 0.0).unwrap();
        let s = ab_eigenvalues(grid(), a, &Potential::Constant(0.0), 3).unwrap();
        assert_eq!(multiplicity_estimate(&s, 1), 1);
        let n = eigenfunction_nodal_count(&s, 1, a, None).unwrap();
        assert_eq!(n.arcs_at_pole, 1);
    }

    #[test]
    fn disk_ground_state_is_simple() {
        let s = disk_eigenvalues(grid(), 2).unwrap();
        assert_eq!(multiplicity_estimate(&s, 1), 1);
        assert!((s.eigenvalues[0] / disk_first_eigenvalue() - 1.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_level_needs_member() {
        let a = PolePosition::origin();
        let s = ab_eigenvalues(grid(), a, &Potential::Constant(0.0), 3).unwrap();
        assert!(matches!(eigenfunction_nodal_count(&s, 1, a, None), Err(SpectrumError::ClusterAmbiguity { size: 2, .. })));
        for m in [1, 2] {
            assert_eq!(eigenfunction_nodal_count(&s, 1, a, Some(m)).unwrap().arcs_at_pole, 1);
        }
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let a = PolePosition::new(0.2, 0.1).unwrap();
        let s0 = ab_eigenvalues(grid(), a, &Potential::Constant(0.0), 2).unwrap();
        let s1 = ab_eigenvalues(grid(), a, &Potential::Constant(3.0), 2).unwrap();
        for (x, y) in s0.eigenvalues.iter().zip(&s1.eigenvalues) {
            assert!((y - x - 3.0).abs() < 1e-6, "{x} {y}");
        }
    }
}
