//! Polar grids on the unit disk and fields sampled on them.
//!
//! Interior rings sit at `ρ_j = (j + ½)Δρ`, `j = 0..n_r`, with
//! `Δρ = 1/(n_r + ½)`, so ring `n_r` is the boundary circle and no node sits at
//! the centre. A line through the origin at a grid angle therefore crosses
//! equally spaced nodes, which keeps interpolation across the centre uniform.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("angular count {0} must be a positive multiple of 4")]
    AngularCount(usize),
    #[error("radial count {0} must be at least 4")]
    RadialCount(usize),
    #[error("field has {got} values, grid needs {expected}")]
    Shape { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolarGrid {
    n_r: usize,
    n_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridLevel {
    Coarse,
    Default,
    Fine,
}

impl GridLevel {
    pub fn grid(self) -> PolarGrid {
        match self {
            GridLevel::Coarse => PolarGrid { n_r: 48, n_t: 96 },
            GridLevel::Default => PolarGrid { n_r: 96, n_t: 192 },
            GridLevel::Fine => PolarGrid { n_r: 192, n_t: 384 },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridLevel::Coarse => "coarse",
            GridLevel::Default => "default",
            GridLevel::Fine => "fine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coarse" => Some(GridLevel::Coarse),
            "default" => Some(GridLevel::Default),
            "fine" => Some(GridLevel::Fine),
            _ => None,
        }
    }
}

impl Default for PolarGrid {
    fn default() -> Self {
        GridLevel::Default.grid()
    }
}

impl PolarGrid {
    pub fn new(n_r: usize, n_t: usize) -> Result<Self, GridError> {
        if n_t == 0 || n_t % 4 != 0 {
            return Err(GridError::AngularCount(n_t));
        }
        if n_r < 4 {
            return Err(GridError::RadialCount(n_r));
        }
        Ok(Self { n_r, n_t })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dr(&self) -> f64 {
        1.0 / (self.n_r as f64 + 0.5)
    }

    pub fn dphi(&self) -> f64 {
        TAU / self.n_t as f64
    }

    /// Radius of ring `j`; `j == n_r` is the boundary.
    pub fn radius(&self, j: usize) -> f64 {
        if j >= self.n_r {
            1.0
        } else {
            (j as f64 + 0.5) * self.dr()
        }
    }

    pub fn angle(&self, m: usize) -> f64 {
        m as f64 * self.dphi()
    }

    pub fn index(&self, j: usize, m: usize) -> usize {
        j * self.n_t + m
    }

    pub fn point(&self, j: usize, m: usize) -> Complex64 {
        Complex64::from_polar(self.radius(j), self.angle(m))
    }

    pub fn boundary_point(&self, m: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angle(m))
    }

    /// Area of the control cell around ring `j`.
    pub fn cell_area(&self, j: usize) -> f64 {
        self.radius(j) * self.dr() * self.dphi()
    }

    /// Typical mesh width, used for tolerances.
    pub fn h(&self) -> f64 {
        self.dr().max(self.dphi())
    }

    pub fn describe(&self) -> String {
        format!("{}x{}", self.n_r, self.n_t)
    }
}

/// Real scalar field on a polar grid: interior values indexed `(j, m)` plus the boundary circle.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField {
    grid: PolarGrid,
    values: Vec<f64>,
    boundary: Vec<f64>,
}

impl PolarField {
    pub fn zeros(grid: PolarGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], boundary: vec![0.0; grid.n_t()] }
    }

    pub fn from_parts(grid: PolarGrid, values: Vec<f64>, boundary: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Shape { expected: grid.len(), got: values.len() });
        }
        if boundary.len() != grid.n_t() {
            return Err(GridError::Shape { expected: grid.n_t(), got: boundary.len() });
        }
        Ok(Self { grid, values, boundary })
    }

    pub fn from_fn(grid: PolarGrid, f: impl Fn(Complex64) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for j in 0..grid.n_r() {
            for m in 0..grid.n_t() {
                field.values[grid.index(j, m)] = f(grid.point(j, m));
            }
        }
        for m in 0..grid.n_t() {
            field.boundary[m] = f(grid.boundary_point(m));
        }
        field
    }

    pub fn grid(&self) -> PolarGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn boundary_mut(&mut self) -> &mut [f64] {
        &mut self.boundary
    }

    /// Value at ring `j` (the boundary when `j == n_r`).
    pub fn at(&self, j: usize, m: usize) -> f64 {
        if j >= self.grid.n_r() {
            self.boundary[m]
        } else {
            self.values[self.grid.index(j, m)]
        }
    }

    /// Ring index extended through the centre: ring `-1 - j` at angle `m` is ring `j` at `m + n_t/2`.
    fn at_signed(&self, j: isize, m: usize) -> f64 {
        let n_t = self.grid.n_t();
        if j >= 0 {
            self.at(j as usize, m % n_t)
        } else {
            self.at((-1 - j) as usize, (m + n_t / 2) % n_t)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().chain(self.boundary.iter()).fold(0.0f64, |s, v| s.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            boundary: self.boundary.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            boundary: self.boundary.iter().zip(&other.boundary).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.zip_with(other, |a, b| a - b).sup_norm()
    }

    /// Values on the circle of radius `rho` at the grid angles, by cubic
    /// interpolation along each diameter.
    pub fn circle_samples(&self, rho: f64) -> Vec<f64> {
        let (base, w, _) = radial_stencil(&self.grid, rho);
        (0..self.grid.n_t())
            .map(|m| (0..4).map(|k| w[k] * self.at_signed(base + k as isize, m)).sum())
            .collect()
    }

    /// Bicubic interpolation at a point of the closed disk.
    pub fn eval(&self, y: Complex64) -> f64 {
        self.eval_with_gradient(y).0
    }

    /// Bicubic interpolation with the Cartesian gradient of the interpolant.
    pub fn eval_with_gradient(&self, y: Complex64) -> (f64, [f64; 2]) {
        let g = &self.grid;
        let rho = y.norm().min(1.0);
        let phi = y.im.atan2(y.re).rem_euclid(TAU);
        let (rbase, rw, rdw) = radial_stencil(g, rho);
        let s = phi / g.dphi();
        let m0 = s.floor() as isize;
        let (aw, adw) = lagrange4(s - m0 as f64);
        let n_t = g.n_t() as isize;
        let mut val = 0.0;
        let mut d_rho = 0.0;
        let mut d_phi = 0.0;
        for (kr, (&wr, &dwr)) in rw.iter().zip(&rdw).enumerate() {
            let jr = rbase + kr as isize;
            let mut ring = 0.0;
            let mut ring_d = 0.0;
            for ka in 0..4 {
                let m = (m0 - 1 + ka as isize).rem_euclid(n_t) as usize;
                let v = self.at_signed(jr, m);
                ring += aw[ka] * v;
                ring_d += adw[ka] * v;
            }
            val += wr * ring;
            d_rho += dwr * ring;
            d_phi += wr * ring_d;
        }
        d_rho /= g.dr();
        d_phi /= g.dphi();
        let (c, sn) = (phi.cos(), phi.sin());
        let r = rho.max(1e-300);
        let gx = d_rho * c - d_phi * sn / r;
        let gy = d_rho * sn + d_phi * c / r;
        (val, [gx, gy])
    }
}

/// Cubic Lagrange weights (and derivative weights) for nodes at -1, 0, 1, 2.
fn lagrange4(t: f64) -> ([f64; 4], [f64; 4]) {
    let nodes = [-1.0, 0.0, 1.0, 2.0];
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for i in 0..4 {
        let mut denom = 1.0;
        for (k, &xk) in nodes.iter().enumerate() {
            if k != i {
                denom *= nodes[i] - xk;
            }
        }
        let mut prod = 1.0;
        for (k, &xk) in nodes.iter().enumerate() {
            if k != i {
                prod *= t - xk;
            }
        }
        let mut dsum = 0.0;
        for l in 0..4 {
            if l == i {
                continue;
            }
            let mut p = 1.0;
            for (k, &xk) in nodes.iter().enumerate() {
                if k != i && k != l {
                    p *= t - xk;
                }
            }
            dsum += p;
        }
        w[i] = prod / denom;
        dw[i] = dsum / denom;
    }
    (w, dw)
}

/// Stencil start ring (signed) and weights for radius `rho`.
fn radial_stencil(g: &PolarGrid, rho: f64) -> (isize, [f64; 4], [f64; 4]) {
    let t = rho / g.dr() - 0.5;
    let mut j0 = t.floor() as isize;
    let top = g.n_r() as isize;
    if j0 + 2 > top {
        j0 = top - 2;
    }
    let (w, dw) = lagrange4(t - j0 as f64);
    (j0 - 1, w, dw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = PolarGrid::new(48, 96).unwrap();
        assert!((g.radius(48) - 1.0).abs() < 1e-15);
        assert!((g.radius(47) + g.dr() - 1.0).abs() < 1e-14);
        assert!((g.radius(0) - 0.5 * g.dr()).abs() < 1e-15);
        assert!(PolarGrid::new(48, 94).is_err());
        assert!(PolarGrid::new(2, 96).is_err());
        let area: f64 = (0..g.n_r()).map(|j| g.cell_area(j) * g.n_t() as f64).sum();
        let inner = (1.0 - 0.5 * g.dr()).powi(2) * std::f64::consts::PI;
        assert!((area - inner).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_smooth_fields() {
        let g = PolarGrid::new(48, 96).unwrap();
        let f = |y: Complex64| (y.re * 1.3).sin() + y.im * y.re - 0.4 * y.im * y.im * y.im;
        let fx = |y: Complex64| 1.3 * (y.re * 1.3).cos() + y.im;
        let fy = |y: Complex64| y.re - 1.2 * y.im * y.im;
        let field = PolarField::from_fn(g, f);
        for &(r, t) in &[(0.0f64, 0.0f64), (0.013, 2.0), (0.3, 0.1), (0.77, 4.0), (0.99, 5.5), (1.0, 1.0)] {
            let y = Complex64::from_polar(r, t);
            let (v, grad) = field.eval_with_gradient(y);
            assert!((v - f(y)).abs() < 1e-5, "value at {y}");
            if r > 0.05 {
                assert!((grad[0] - fx(y)).abs() < 2e-3, "gx at {y}");
                assert!((grad[1] - fy(y)).abs() < 2e-3, "gy at {y}");
            }
        }
        let samples = field.circle_samples(0.42);
        for (m, s) in samples.iter().enumerate() {
            let y = Complex64::from_polar(0.42, g.angle(m));
            assert!((s - f(y)).abs() < 1e-6);
        }
    }

    #[test]
    fn lagrange_weights_partition_unity() {
        for &t in &[0.0, 0.3, 0.99, 1.0] {
            let (w, dw) = lagrange4(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(dw.iter().sum::<f64>().abs() < 1e-13);
        }
    }
}
