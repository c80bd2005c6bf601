//! Quantities parameterized by the pole: magnetic energy, the coefficient map,
//! the triple-point Newton iteration and the local energy-drop construction.

use crate::elliptic::{dirichlet_energy, solve_dirichlet, solve_dirichlet_odd, EllipticError};
use crate::geometry::{chart_map_inverse, GeometryError, PolePosition};
use crate::grid::{PolarField, PolarGrid};
use crate::nodal::{fourier_coeff_extract, to_pole_chart, AsymptoticCoeffs, NodalError, DEFAULT_RADII};
use crate::potential::Potential;
use crate::trace::BoundaryTrace;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TripleError {
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Nodal(#[from] NodalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("|c₃ − i d₃| = {0:.3e} is below the degeneracy threshold")]
    DegenerateJacobian(f64),
    #[error("iterate left the admissible disk at a = {0}")]
    LeftDomain(Complex64),
    #[error("{zeros} nodal crossings on the test circle, expected 2")]
    NotSingleArc { zeros: usize },
    #[error("test disk of radius {h} around the pole leaves the domain")]
    DiskOutsideDomain { h: f64 },
}

pub const MAX_POLE_RADIUS: f64 = 0.95;

/// A trace and a potential on a reference grid.
#[derive(Debug, Clone)]
pub struct PoleProblem {
    pub trace: BoundaryTrace,
    pub potential: Potential,
    pub grid: PolarGrid,
}

/// Solution of the reduced problem for one pole position.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub pole: PolePosition,
    /// Odd solution in the reference chart.
    pub field: PolarField,
    /// Pulled-back potential in the reference chart.
    pub weight: PolarField,
}

impl Configuration {
    /// `½ ∫ (|∇u|² + W u²)` over the reference disk (the disk covers the domain twice).
    pub fn energy(&self) -> f64 {
        0.5 * dirichlet_energy(&self.field, &self.weight)
    }

    /// Pole-chart coefficients of orders 1 and 3.
    pub fn coefficients(&self) -> Result<CoefficientPair, NodalError> {
        let f = fourier_coeff_extract(&self.field, 1, &DEFAULT_RADII)?;
        let t = fourier_coeff_extract(&self.field, 3, &DEFAULT_RADII)?;
        let (c1, c3) = to_pole_chart(self.pole, f.complex(), t.complex());
        let mut first = AsymptoticCoeffs::new(1, c1);
        first.residual = f.residual;
        first.extraction_radius = f.extraction_radius;
        let mut third = AsymptoticCoeffs::new(3, c3);
        third.residual = t.residual;
        third.extraction_radius = t.extraction_radius;
        Ok(CoefficientPair { first, third })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientPair {
    pub first: AsymptoticCoeffs,
    pub third: AsymptoticCoeffs,
}

/// Centered finite-difference gradient with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyGradient {
    pub value: [f64; 2],
    /// Richardson estimate of the truncation error plus a round-off allowance.
    pub noise_floor: f64,
    pub step: f64,
    /// Grid error estimate `|g_h − g_2h|/3`, zero unless requested.
    pub discretization: f64,
}

impl EnergyGradient {
    pub fn norm(&self) -> f64 {
        self.value[0].hypot(self.value[1])
    }

    /// Total measured floor: step noise plus grid error.
    pub fn floor(&self) -> f64 {
        self.noise_floor + self.discretization
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on `|(c₁, d₁)|`; scaled by the trace scale when `None`.
    pub tol: Option<f64>,
    pub max_iterations: usize,
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: None, max_iterations: 30, fd_step: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub a: Complex64,
    pub residual: f64,
    pub jacobian: Complex64,
    pub fd_jacobian: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriplePointResult {
    pub a_star: Complex64,
    pub residual: f64,
    /// `½(c₃ − i d₃)` at the final iterate.
    pub jacobian_used: Complex64,
    pub iterations: usize,
    pub converged: bool,
    pub used_fd_fallback: bool,
    pub log: Vec<NewtonStep>,
}

impl TriplePointResult {
    /// Line-oriented Newton log.
    pub fn log_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.log {
            let _ = writeln!(
                out,
                "iter={} a1={:.12e} a2={:.12e} residual={:.6e} jac_re={:.6e} jac_im={:.6e} fd={}",
                s.iteration, s.a.re, s.a.im, s.residual, s.jacobian.re, s.jacobian.im, s.fd_jacobian
            );
        }
        out
    }
}

/// Outcome of the local energy-drop construction at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyDrop {
    pub h: f64,
    /// `2(Q(Z) − Q(U))/h`, the drop measured on the blown-up unit disk.
    pub ratio: f64,
    /// `Q(Z) − Q(U)`.
    pub energy_change: f64,
    /// Blow-up model value `(4/π − π)(c₁² + d₁²)`.
    pub model: f64,
    /// Displaced pole on the nodal arc at distance `h`.
    pub displaced_pole: Complex64,
}

/// Energy drops over decreasing radii with a first-order extrapolation to `h → 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropSweep {
    pub drops: Vec<EnergyDrop>,
    pub model: f64,
    pub extrapolated: f64,
    /// `|extrapolated / model − 1|`.
    pub relative_error: f64,
    /// Raw errors decrease along the sweep.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapePoint {
    pub a: Complex64,
    pub phi: f64,
    pub gradient: [f64; 2],
    pub noise_floor: f64,
    pub c1: f64,
    pub d1: f64,
    pub c3: f64,
    pub d3: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLandscape {
    pub points: Vec<LandscapePoint>,
    pub minimizer: Complex64,
    pub scan_tol: f64,
}

impl EnergyLandscape {
    pub fn flagged(&self) -> Vec<&LandscapePoint> {
        self.points.iter().filter(|p| p.flagged).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("a1,a2,phi,dphi1,dphi2,c1,d1,c3,d3\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.12e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                p.a.re, p.a.im, p.phi, p.gradient[0], p.gradient[1], p.c1, p.d1, p.c3, p.d3
            );
        }
        out
    }
}

/// `(4/π − π)`, the blow-up energy change per unit `c₁² + d₁²`.
pub fn drop_model_constant() -> f64 {
    4.0 / std::f64::consts::PI - std::f64::consts::PI
}

impl PoleProblem {
    pub fn new(trace: BoundaryTrace, potential: Potential, grid: PolarGrid) -> Self {
        Self { trace, potential, grid }
    }

    /// Refuses potentials whose operator is not coercive on the physical grid.
    pub fn check_coercive(&self) -> Result<f64, TripleError> {
        let v = self.potential.physical_field(self.grid);
        if v.values().iter().all(|&x| x >= 0.0) {
            return Ok(f64::INFINITY);
        }
        let lambda = crate::elliptic::check_coercive(self.grid, &v)?;
        if lambda <= 0.0 {
            return Err(EllipticError::NotCoercive.into());
        }
        Ok(lambda)
    }

    pub fn scale(&self) -> f64 {
        self.trace.scale()
    }

    pub fn solve(&self, a: PolePosition) -> Result<Configuration, TripleError> {
        let weight = self.potential.reference_field(a, self.grid);
        let boundary = self.trace.cover_boundary(a, self.grid.n_t());
        let field = solve_dirichlet_odd(self.grid, &weight, &boundary)?;
        Ok(Configuration { pole: a, field, weight })
    }

    pub fn magnetic_energy(&self, a: PolePosition) -> Result<f64, TripleError> {
        Ok(self.solve(a)?.energy())
    }

    pub fn coefficient_map(&self, a: PolePosition) -> Result<CoefficientPair, TripleError> {
        Ok(self.solve(a)?.coefficients()?)
    }

    fn energy_at(&self, a: Complex64) -> Result<f64, TripleError> {
        self.magnetic_energy(PolePosition::from_complex(a)?)
    }

    fn centered(&self, a: Complex64, h: f64) -> Result<[f64; 2], TripleError> {
        let dx = (self.energy_at(a + h)? - self.energy_at(a - h)?) / (2.0 * h);
        let dy = (self.energy_at(a + Complex64::new(0.0, h))? - self.energy_at(a - Complex64::new(0.0, h))?) / (2.0 * h);
        Ok([dx, dy])
    }

    /// Centered differences with step `h`; the noise floor compares against step `2h`.
    pub fn energy_gradient(&self, a: PolePosition, h: f64) -> Result<EnergyGradient, TripleError> {
        let g1 = self.centered(a.z(), h)?;
        let g2 = self.centered(a.z(), 2.0 * h)?;
        let phi = self.energy_at(a.z())?;
        let truncation = (g1[0] - g2[0]).hypot(g1[1] - g2[1]) / 3.0;
        let roundoff = 1e-13 * phi.abs() / h;
        Ok(EnergyGradient { value: g1, noise_floor: truncation + roundoff, step: h, discretization: 0.0 })
    }

    /// [`PoleProblem::energy_gradient`] together with a grid error estimate from a
    /// solve at half the resolution. Away from symmetric configurations the true
    /// gradient near a triple point is quadratically small, so the grid error is
    /// what bounds how close to zero the discrete gradient can get.
    pub fn energy_gradient_with_grid_error(&self, a: PolePosition, h: f64) -> Result<EnergyGradient, TripleError> {
        let mut g = self.energy_gradient(a, h)?;
        let half = PolarGrid::new((self.grid.n_r() / 2).max(8), (self.grid.n_t() / 2).max(16)).expect("halved grid stays valid");
        let coarse = PoleProblem::new(self.trace.clone(), self.potential.clone(), half).energy_gradient(a, h)?;
        g.discretization = (g.value[0] - coarse.value[0]).hypot(g.value[1] - coarse.value[1]) / 3.0;
        Ok(g)
    }

    fn residual_of(c: &CoefficientPair) -> Complex64 {
        c.first.complex()
    }

    fn fd_jacobian(&self, a: Complex64, step: f64) -> Result<[[f64; 2]; 2], TripleError> {
        let at = |z: Complex64| -> Result<Complex64, TripleError> {
            Ok(Self::residual_of(&self.coefficient_map(PolePosition::from_complex(z)?)?))
        };
        let dx = (at(a + step)? - at(a - step)?) / (2.0 * step);
        let dy = (at(a + Complex64::new(0.0, step))? - at(a - Complex64::new(0.0, step))?) / (2.0 * step);
        Ok([[dx.re, dy.re], [dx.im, dy.im]])
    }

    /// Centered-difference Jacobian of `(c₁, −d₁)` with respect to `(a₁, a₂)`.
    pub fn coefficient_jacobian(&self, a: PolePosition, step: f64) -> Result<[[f64; 2]; 2], TripleError> {
        self.fd_jacobian(a.z(), step)
    }

    /// Newton iteration on `c₁ − i d₁ = 0` with the Jacobian `½(c₃ − i d₃)`,
    /// switching to a finite-difference Jacobian after a non-contracting step.
    pub fn find_triple_point(&self, a0: PolePosition, opts: &NewtonOptions) -> Result<TriplePointResult, TripleError> {
        let scale = self.scale();
        let tol = opts.tol.unwrap_or(1e-6 * scale);
        let degenerate = 1e-4 * scale;
        let mut a = a0.z();
        let mut coeffs = self.coefficient_map(a0)?;
        let mut res = Self::residual_of(&coeffs).norm();
        let mut use_fd = false;
        let mut used_fd = false;
        let mut log = Vec::new();
        for it in 0..=opts.max_iterations {
            let jac = 0.5 * coeffs.third.complex();
            log.push(NewtonStep { iteration: it, a, residual: res, jacobian: jac, fd_jacobian: use_fd });
            if res < tol {
                return Ok(TriplePointResult {
                    a_star: a,
                    residual: res,
                    jacobian_used: jac,
                    iterations: it,
                    converged: true,
                    used_fd_fallback: used_fd,
                    log,
                });
            }
            if it == opts.max_iterations {
                break;
            }
            let r = Self::residual_of(&coeffs);
            let delta = if use_fd {
                let j = self.fd_jacobian(a, opts.fd_step)?;
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det.abs() < 1e-300 {
                    return Err(TripleError::DegenerateJacobian(det.abs().sqrt()));
                }
                Complex64::new(-(j[1][1] * r.re - j[0][1] * r.im) / det, -(-j[1][0] * r.re + j[0][0] * r.im) / det)
            } else {
                if jac.norm() < 0.5 * degenerate {
                    return Err(TripleError::DegenerateJacobian(2.0 * jac.norm()));
                }
                -r / jac
            };
            // Backtrack on the residual; leaving the disk is an error only if no step stays inside.
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1.0 / 64.0 {
                let cand = a + delta * t;
                if cand.norm() < MAX_POLE_RADIUS {
                    let c = self.coefficient_map(PolePosition::from_complex(cand)?)?;
                    let rn = Self::residual_of(&c).norm();
                    if rn < res || t <= 1.0 / 32.0 {
                        accepted = Some((cand, c, rn, t));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((cand, c, rn, t)) = accepted else {
                return Err(TripleError::LeftDomain(a + delta));
            };
            if (rn >= res || t < 1.0) && !use_fd {
                use_fd = true;
                used_fd = true;
            }
            a = cand;
            coeffs = c;
            res = rn;
        }
        Err(TripleError::NoConvergence { iterations: opts.max_iterations, residual: res })
    }

    /// Blow-up comparison at radius `h`: solves on the unit disk of the scaled
    /// pole chart `y₁ = √h η` with data `u` and `|u|` and returns the energy change.
    pub fn energy_drop_test(&self, config: &Configuration, h: f64, grid: PolarGrid) -> Result<EnergyDrop, TripleError> {
        let a = config.pole;
        if a.norm() + h >= 1.0 {
            return Err(TripleError::DiskOutsideDomain { h });
        }
        let sh = h.sqrt();
        let blown = |eta: Complex64| -> f64 { config.field.eval(chart_map_inverse(a, sh * eta)) / sh };
        let n_t = grid.n_t();
        let data: Vec<f64> = (0..n_t).map(|m| blown(grid.boundary_point(m))).collect();
        let zeros = (0..n_t).filter(|&m| data[m] * data[(m + 1) % n_t] < 0.0).collect::<Vec<_>>();
        if zeros.len() != 2 {
            return Err(TripleError::NotSingleArc { zeros: zeros.len() });
        }
        let potential = &self.potential;
        let w = PolarField::from_fn(grid, |eta| 4.0 * h * h * eta.norm_sqr() * potential.eval(a.z() + h * eta * eta));
        let u = solve_dirichlet(grid, &w, &data)?;
        let abs: Vec<f64> = data.iter().map(|v| v.abs()).collect();
        let wfield = solve_dirichlet(grid, &w, &abs)?;
        let ratio = dirichlet_energy(&wfield, &w) - dirichlet_energy(&u, &w);
        // Zero of the data by linear interpolation gives the nodal direction.
        let m = zeros[0];
        let (v0, v1) = (data[m], data[(m + 1) % n_t]);
        let phi = grid.angle(m) + grid.dphi() * v0 / (v0 - v1);
        let y0 = Complex64::from_polar(sh, phi);
        let c = config.coefficients()?;
        Ok(EnergyDrop {
            h,
            ratio,
            energy_change: 0.5 * h * ratio,
            model: drop_model_constant() * c.first.magnitude().powi(2),
            displaced_pole: a.z() + y0 * y0,
        })
    }

    /// Runs [`PoleProblem::energy_drop_test`] over `radii` (decreasing, each half the previous).
    pub fn energy_drop_sweep(&self, config: &Configuration, radii: &[f64], grid: PolarGrid) -> Result<DropSweep, TripleError> {
        let drops = radii.iter().map(|&h| self.energy_drop_test(config, h, grid)).collect::<Result<Vec<_>, _>>()?;
        let model = drops.first().map_or(0.0, |d| d.model);
        let extrapolated = match drops.as_slice() {
            [.., p, q] => {
                let t = q.h / p.h;
                (q.ratio - t * p.ratio) / (1.0 - t)
            }
            [q] => q.ratio,
            [] => 0.0,
        };
        let errs: Vec<f64> = drops.iter().map(|d| (d.ratio - model).abs()).collect();
        Ok(DropSweep {
            monotone: errs.windows(2).all(|w| w[1] <= w[0]),
            relative_error: (extrapolated / model - 1.0).abs(),
            drops,
            model,
            extrapolated,
        })
    }

    /// Energy, gradient and coefficients at every point; flags points whose gradient
    /// norm is below `scan_tol` times the largest gradient norm of the scan.
    pub fn landscape_scan(&self, points: &[Complex64], fd_step: f64, scan_tol: f64) -> Result<EnergyLandscape, TripleError> {
        let rows: Result<Vec<LandscapePoint>, TripleError> = points
            .par_iter()
            .map(|&z| {
                let a = PolePosition::from_complex(z)?;
                let phi = self.magnetic_energy(a)?;
                let g = self.energy_gradient(a, fd_step)?;
                let c = self.coefficient_map(a)?;
                Ok(LandscapePoint {
                    a: z,
                    phi,
                    gradient: g.value,
                    noise_floor: g.noise_floor,
                    c1: c.first.c,
                    d1: c.first.d,
                    c3: c.third.c,
                    d3: c.third.d,
                    flagged: false,
                })
            })
            .collect();
        let mut rows = rows?;
        let gmax = rows.iter().map(|p| p.gradient[0].hypot(p.gradient[1])).fold(0.0, f64::max);
        for p in &mut rows {
            p.flagged = p.gradient[0].hypot(p.gradient[1]) < scan_tol * gmax;
        }
        let minimizer = rows.iter().min_by(|p, q| p.phi.total_cmp(&q.phi)).map_or(Complex64::new(0.0, 0.0), |p| p.a);
        Ok(EnergyLandscape { points: rows, minimizer, scan_tol })
    }
}

/// Square grid of pole positions inside `|a| ≤ radius`.
pub fn disk_scan_points(radius: f64, per_side: usize) -> Vec<Complex64> {
    let mut out = Vec::new();
    for i in 0..per_side {
        for j in 0..per_side {
            let t = |k: usize| -radius + 2.0 * radius * k as f64 / (per_side - 1) as f64;
            let z = Complex64::new(t(i), t(j));
            if z.norm() <= radius + 1e-12 {
                out.push(z);
            }
        }
    }
    out
}

/// Starting points on a circle.
pub fn newton_starts(radius: f64, count: usize, phase: f64) -> Vec<Complex64> {
    (0..count).map(|k| Complex64::from_polar(radius, phase + TAU * k as f64 / count as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(n_r: usize) -> PoleProblem {
        PoleProblem::new(BoundaryTrace::symmetric(), Potential::Constant(0.0), PolarGrid::new(n_r, 2 * n_r).unwrap())
    }

    #[test]
    fn symmetric_center_coefficients() {
        let p = problem(48);
        let c = p.coefficient_map(PolePosition::origin()).unwrap();
        assert!(c.first.magnitude() < 1e-12, "{:?}", c.first);
        // u = ρ³ sin 3φ: c₃ = 0, d₃ = 3.
        assert!(c.third.c.abs() < 1e-10 && (c.third.d - 3.0).abs() < 0.1, "{:?}", c.third);
    }

    #[test]
    fn energy_is_quadratic_in_trace() {
        let p = problem(24);
        let a = PolePosition::new(0.2, 0.1).unwrap();
        let e1 = p.magnetic_energy(a).unwrap();
        let q = PoleProblem::new(p.trace.scaled(2.5), p.potential.clone(), p.grid);
        let e2 = q.magnetic_energy(a).unwrap();
        assert!((e2 - 6.25 * e1).abs() < 1e-10 * e2);
        let zero = PoleProblem::new(p.trace.scaled(0.0), p.potential.clone(), p.grid);
        assert_eq!(zero.magnetic_energy(a).unwrap(), 0.0);
    }

    #[test]
    fn energy_has_threefold_symmetry() {
        let p = PoleProblem::new(BoundaryTrace::symmetric(), Potential::Constant(1.0), PolarGrid::new(24, 48).unwrap());
        let a = Complex64::new(0.25, 0.1);
        let r = Complex64::from_polar(1.0, TAU / 3.0);
        let e0 = p.magnetic_energy(PolePosition::from_complex(a).unwrap()).unwrap();
        let e1 = p.magnetic_energy(PolePosition::from_complex(a * r).unwrap()).unwrap();
        assert!((e0 - e1).abs() < 1e-3 * e0, "{e0} {e1}");
    }

    #[test]
    fn newton_finds_symmetric_center() {
        let p = problem(24);
        let r = p.find_triple_point(PolePosition::new(0.2, 0.1).unwrap(), &NewtonOptions::default()).unwrap();
        assert!(r.converged && r.a_star.norm() < 1e-5, "{r:?}");
        assert!(r.iterations <= 8);
        let again = p.find_triple_point(PolePosition::from_complex(r.a_star).unwrap(), &NewtonOptions::default()).unwrap();
        assert!(again.iterations <= 1);
    }

    #[test]
    fn drop_sweep_approaches_model() {
        let p = problem(48);
        let c = p.solve(PolePosition::new(-0.5, 0.1).unwrap()).unwrap();
        let s = p.energy_drop_sweep(&c, &[0.1, 0.05], p.grid).unwrap();
        assert!(s.drops.iter().all(|d| d.ratio < 0.0 && d.energy_change < 0.0));
        assert!(s.relative_error < 0.1, "{s:?}");
    }

    #[test]
    fn drop_rejects_triple_point() {
        let p = problem(24);
        let c = p.solve(PolePosition::origin()).unwrap();
        assert!(matches!(p.energy_drop_test(&c, 0.1, p.grid), Err(TripleError::NotSingleArc { zeros: 6 })));
    }
}
