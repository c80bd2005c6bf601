//! Nodal asymptotics at the pole, nodal-line tracing and configuration classification.
//!
//! Fields live on a polar grid of a chart whose origin is the pole. A real odd
//! field behaves like `Re[(c_k − i d_k) y^k] / k` at the origin for some odd `k`.

use crate::geometry::{chart_map, chart_map_derivative, moebius_inverse, reference_to_physical, PolePosition};
use crate::grid::PolarField;
use crate::trace::BoundaryTrace;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodalError {
    #[error("extraction radius {0} is outside the resolvable range of the grid")]
    RadiusOutOfGrid(f64),
    #[error("need at least two extraction radii")]
    TooFewRadii,
    #[error("order {order} content {magnitude:.3e} is not small; order {target} is not leading")]
    LowerOrderNotSmall { order: u32, target: u32, magnitude: f64 },
    #[error("orders 1 and 3 both vanish (|C₁| = {first:.3e}, |C₃| = {third:.3e})")]
    Degenerate { first: f64, third: f64 },
    #[error("seed value {0:.3e} is not on the zero set")]
    SeedNotOnCurve(f64),
    #[error("tracer stalled at y = {at} with |∇u| = {gradient:.3e}")]
    StallNearSingularPoint { at: Complex64, gradient: f64 },
    #[error("tracer exceeded {0} steps")]
    MaxStepsExceeded(usize),
    #[error("inconsistent nodal topology: {0}")]
    InconsistentTopology(String),
    #[error("curve has no points")]
    EmptyCurve,
}

/// Leading expansion data `u ≈ Re[(c − i d) y^k] / k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCoeffs {
    pub order: u32,
    pub c: f64,
    pub d: f64,
    pub extraction_radius: f64,
    pub residual: f64,
}

impl AsymptoticCoeffs {
    pub fn new(order: u32, value: Complex64) -> Self {
        Self { order, c: value.re, d: -value.im, extraction_radius: 0.0, residual: 0.0 }
    }

    /// `c − i d`.
    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.c, -self.d)
    }

    pub fn magnitude(&self) -> f64 {
        self.c.hypot(self.d)
    }
}

fn check_radius(u: &PolarField, rho: f64) -> Result<(), NodalError> {
    let g = u.grid();
    if !(rho > 0.0 && rho <= g.radius(g.n_r() - 3)) {
        return Err(NodalError::RadiusOutOfGrid(rho));
    }
    Ok(())
}

/// `(k/ρᵏ)(1/π) Σ u e^{−ikφ} Δφ` on the circle of radius `ρ`, i.e. `c_k(ρ) − i d_k(ρ)`.
fn circle_coefficient(samples: &[f64], k: u32, rho: f64) -> Complex64 {
    let n = samples.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, &v) in samples.iter().enumerate() {
        acc += v * Complex64::from_polar(1.0, -TAU * ((k as usize * m) % n) as f64 / n as f64);
    }
    acc * (k as f64 / rho.powi(k as i32) * 2.0 / n as f64)
}

/// Value at `x = 0` of the polynomial through `(xᵢ, fᵢ)`.
fn extrapolate_to_zero(xs: &[f64], fs: &[Complex64]) -> Complex64 {
    let mut out = Complex64::new(0.0, 0.0);
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if j != i {
                w *= xs[j] / (xs[j] - xs[i]);
            }
        }
        out += fs[i] * w;
    }
    out
}

pub const DEFAULT_RADII: [f64; 3] = [0.10, 0.15, 0.20];

/// Fourier projection on circles, extrapolated in `ρ²` to the origin. The
/// residual is the change when the outermost radius is dropped.
pub fn fourier_coeff_extract(u: &PolarField, k: u32, radii: &[f64]) -> Result<AsymptoticCoeffs, NodalError> {
    if radii.len() < 2 {
        return Err(NodalError::TooFewRadii);
    }
    for &r in radii {
        check_radius(u, r)?;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let fs: Vec<Complex64> = radii.iter().map(|&r| circle_coefficient(&u.circle_samples(r), k, r)).collect();
    let value = extrapolate_to_zero(&xs, &fs);
    let fewer = extrapolate_to_zero(&xs[..xs.len() - 1], &fs[..fs.len() - 1]);
    let mut out = AsymptoticCoeffs::new(k, value);
    out.extraction_radius = radii[0];
    out.residual = (value - fewer).norm();
    Ok(out)
}

/// Largest even-order Fourier coefficient on the circle of radius `ρ` (zero for odd fields).
pub fn even_mode_content(u: &PolarField, rho: f64) -> f64 {
    let s = u.circle_samples(rho);
    let n = s.len();
    (0..n / 2)
        .step_by(2)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &v) in s.iter().enumerate() {
                acc += v * Complex64::from_polar(1.0, -TAU * ((k * m) % n) as f64 / n as f64);
            }
            acc.norm() / n as f64
        })
        .fold(0.0, f64::max)
}

const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_8, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

/// Cauchy-type formula
/// `c_k − i d_k = 2i ∮_{|z|=R} ∂_z u · h_k dz − ∬_{|z|<R} (−Δu) h_k`, `h_k = −1/(2π z^k)`,
/// with `−Δu = −W u` from the equation. When `lower_tol` is given, order `k − 2`
/// content above it is an error.
pub fn cauchy_coeff_extract(
    u: &PolarField,
    w: &PolarField,
    k: u32,
    radius: f64,
    lower_tol: Option<f64>,
) -> Result<AsymptoticCoeffs, NodalError> {
    let g = u.grid();
    let dr = g.dr();
    check_radius(u, radius + 2.0 * dr)?;
    if let (Some(tol), true) = (lower_tol, k >= 3) {
        let lower = fourier_coeff_extract(u, k - 2, &DEFAULT_RADII.map(|r| r.min(radius)))?;
        if lower.magnitude() > tol {
            return Err(NodalError::LowerOrderNotSmall { order: k - 2, target: k, magnitude: lower.magnitude() });
        }
    }
    let n = g.n_t();
    let dphi = g.dphi();
    let ring = |k: f64| u.circle_samples(radius + k * dr);
    let (in2, in1, mid, out1, out2) = (ring(-2.0), ring(-1.0), ring(0.0), ring(1.0), ring(2.0));
    // Spectral angular derivative.
    let d_phi = spectral_derivative(&mid);
    let mut contour = Complex64::new(0.0, 0.0);
    for m in 0..n {
        let phi = g.angle(m);
        let z = Complex64::from_polar(radius, phi);
        let d_rho = (8.0 * (out1[m] - in1[m]) - (out2[m] - in2[m])) / (12.0 * dr);
        let dz_u = 0.5 * Complex64::from_polar(1.0, -phi) * Complex64::new(d_rho, -d_phi[m] / radius);
        let h = -1.0 / (TAU * z.powi(k as i32));
        contour += dz_u * h * Complex64::i() * z * dphi;
    }
    let mut area = Complex64::new(0.0, 0.0);
    for &(x, wgl) in &GL16 {
        for (t, wt) in [(0.5 * (1.0 - x), 0.5 * wgl), (0.5 * (1.0 + x), 0.5 * wgl)] {
            let rho = t * radius;
            let us = u.circle_samples(rho);
            let ws = w.circle_samples(rho);
            for m in 0..n {
                let z = Complex64::from_polar(rho, g.angle(m));
                let h = -1.0 / (TAU * z.powi(k as i32));
                // −(−Δu) h = W u h
                area += ws[m] * us[m] * h * rho * wt * radius * dphi;
            }
        }
    }
    let value = 2.0 * Complex64::i() * contour + area;
    let mut out = AsymptoticCoeffs::new(k, value);
    out.extraction_radius = radius;
    Ok(out)
}

fn spectral_derivative(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let coeffs: Vec<Complex64> = (0..n)
        .map(|k| {
            samples
                .iter()
                .enumerate()
                .map(|(m, &v)| v * Complex64::from_polar(1.0, -TAU * ((k * m) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect();
    (0..n)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, c) in coeffs.iter().enumerate() {
                let kk = if k < n / 2 {
                    k as f64
                } else if k == n / 2 {
                    0.0
                } else {
                    k as f64 - n as f64
                };
                acc += Complex64::i() * kk * c * Complex64::from_polar(1.0, TAU * ((k * m) % n) as f64 / n as f64);
            }
            acc.re
        })
        .collect()
}

/// Coefficients of orders 1 and 3 and the leading one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeadingOrder {
    pub order: u32,
    pub first: AsymptoticCoeffs,
    pub third: AsymptoticCoeffs,
}

impl LeadingOrder {
    pub fn leading(&self) -> AsymptoticCoeffs {
        if self.order == 1 {
            self.first
        } else {
            self.third
        }
    }
}

pub fn classify_order(first: AsymptoticCoeffs, third: AsymptoticCoeffs, tol: f64) -> Result<LeadingOrder, NodalError> {
    if first.magnitude() > tol {
        Ok(LeadingOrder { order: 1, first, third })
    } else if third.magnitude() > tol {
        Ok(LeadingOrder { order: 3, first, third })
    } else {
        Err(NodalError::Degenerate { first: first.magnitude(), third: third.magnitude() })
    }
}

/// Smallest odd order in {1, 3} whose coefficient exceeds `tol` (field chart).
pub fn leading_order(u: &PolarField, tol: f64) -> Result<LeadingOrder, NodalError> {
    let first = fourier_coeff_extract(u, 1, &DEFAULT_RADII)?;
    let third = fourier_coeff_extract(u, 3, &DEFAULT_RADII)?;
    classify_order(first, third, tol)
}

/// Converts reference-chart coefficients to the pole chart `y₁² = x − a`.
pub fn to_pole_chart(a: PolePosition, first: Complex64, third: Complex64) -> (Complex64, Complex64) {
    let s = (1.0 - a.norm().powi(2)).sqrt();
    let c1 = first / s;
    let c3 = (third + 1.5 * a.z().conj() * first) / (s * s * s);
    (c1, c3)
}

/// Endpoint tag of a nodal arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Endpoint {
    Pole,
    /// Index of the boundary zero (0, 1, 2 in trace order).
    BoundaryZero(usize),
    /// A boundary point that is not one of the trace zeros.
    Boundary,
}

/// A traced nodal arc.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalCurve {
    /// Physical points `x`.
    pub points: Vec<Complex64>,
    /// Arc length in the physical disk.
    pub params: Vec<f64>,
    /// Reference-chart points the tracer visited.
    pub cover_points: Vec<Complex64>,
    pub start: Endpoint,
    pub end: Endpoint,
    /// Largest `|u|` along the traced polyline.
    pub max_residual: f64,
    /// `(|y₁|, |∇u|/|y₁|²)` in the pole chart at each traced point.
    pub pole_speeds: Vec<(f64, f64)>,
}

impl NodalCurve {
    fn from_cover(a: PolePosition, cover: Vec<Complex64>, start: Endpoint, end: Endpoint, max_residual: f64, pole_speeds: Vec<(f64, f64)>) -> Self {
        let points: Vec<Complex64> = cover.iter().map(|&y| reference_to_physical(a, y)).collect();
        let mut params = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                s += (p - points[i - 1]).norm();
            }
            params.push(s);
        }
        Self { points, params, cover_points: cover, start, end, max_residual, pole_speeds }
    }

    pub fn length(&self) -> f64 {
        self.params.last().copied().unwrap_or(0.0)
    }

    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.points.reverse();
        out.cover_points.reverse();
        out.pole_speeds.reverse();
        let total = self.length();
        out.params = self.params.iter().rev().map(|s| total - s).collect();
        std::mem::swap(&mut out.start, &mut out.end);
        out
    }

    /// Unit tangents by centered differences.
    pub fn tangents(&self) -> Vec<Complex64> {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (p, q) = (self.points[i.saturating_sub(1)], self.points[(i + 1).min(n - 1)]);
                let d = q - p;
                if d.norm() > 0.0 {
                    d / d.norm()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// Limit of the pole-chart speed `|∇u|/|y₁|²` by a linear fit in `|y₁|²` over `[r_min, r_max]`.
    pub fn pole_speed_limit(&self, r_min: f64, r_max: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> =
            self.pole_speeds.iter().filter(|(r, _)| *r >= r_min && *r <= r_max).map(|&(r, v)| (r * r, v)).collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        Some(my - slope * mx)
    }

    /// CSV with columns `s, x1, x2, tx1, tx2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x1,x2,tx1,tx2\n");
        for ((s, p), t) in self.params.iter().zip(&self.points).zip(self.tangents()) {
            let _ = writeln!(out, "{s:.10},{:.10},{:.10},{:.10},{:.10}", p.re, p.im, t.re, t.im);
        }
        out
    }
}

/// Tracer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub step: f64,
    /// The tracer stops when it comes this close to the pole (reference chart).
    pub pole_radius: f64,
    pub max_steps: usize,
    /// Relative gradient floor below which the tracer reports a stall.
    pub stall_ratio: f64,
    /// Relative seed tolerance.
    pub seed_tol: f64,
}

impl TraceOptions {
    pub fn for_field(u: &PolarField) -> Self {
        let h = u.grid().dr();
        Self { step: 0.5 * h, pole_radius: 1.5 * h, max_steps: 20_000, stall_ratio: 1e-6, seed_tol: 1e-6 }
    }
}

fn newton_to_zero(u: &PolarField, mut y: Complex64, scale: f64) -> (Complex64, f64) {
    let mut v = 0.0;
    for _ in 0..8 {
        let (val, g) = u.eval_with_gradient(y);
        v = val;
        let g2 = g[0] * g[0] + g[1] * g[1];
        if val.abs() < 1e-13 * scale || g2 == 0.0 {
            break;
        }
        y -= Complex64::new(g[0], g[1]) * (val / g2);
        if y.norm() > 1.0 {
            y /= y.norm();
        }
    }
    (y, v)
}

fn tangent(u: &PolarField, y: Complex64) -> (Complex64, f64) {
    let (_, g) = u.eval_with_gradient(y);
    let gn = g[0].hypot(g[1]);
    (Complex64::new(-g[1], g[0]) / gn.max(1e-300), gn)
}

/// Marches along `u = 0` from a reference-chart seed until the boundary or the pole.
/// `direction` selects the orientation of the tangent `(−∂₂u, ∂₁u)`.
pub fn trace_nodal_curve(
    u: &PolarField,
    a: PolePosition,
    start: Complex64,
    direction: f64,
    opts: &TraceOptions,
) -> Result<(Vec<Complex64>, f64, Vec<(f64, f64)>, Endpoint), NodalError> {
    let scale = u.sup_norm().max(1e-300);
    let (seed_val, _) = u.eval_with_gradient(start);
    if seed_val.abs() > opts.seed_tol * scale {
        return Err(NodalError::SeedNotOnCurve(seed_val));
    }
    let mut y = start;
    let mut points = vec![y];
    let mut max_res = seed_val.abs();
    let mut speeds = Vec::new();
    let (mut t_prev, _) = tangent(u, y);
    t_prev *= direction.signum();
    let record = |y: Complex64, gn: f64, speeds: &mut Vec<(f64, f64)>| {
        let y1 = chart_map(a, y);
        let jac = chart_map_derivative(a, y).norm();
        let r = y1.norm();
        if r > 0.0 {
            speeds.push((r, gn / jac / (r * r)));
        }
    };
    for _ in 0..opts.max_steps {
        let r = y.norm();
        let h = opts.step.min(0.25 * r.max(opts.pole_radius));
        let (t1, g1) = tangent(u, y);
        if g1 < opts.stall_ratio * scale && r > opts.pole_radius {
            return Err(NodalError::StallNearSingularPoint { at: y, gradient: g1 });
        }
        let t1 = if (t1 * t_prev.conj()).re < 0.0 { -t1 } else { t1 };
        let mid = y + t1 * h;
        let (t2, _) = tangent(u, mid);
        let t2 = if (t2 * t1.conj()).re < 0.0 { -t2 } else { t2 };
        let dir = {
            let s = t1 + t2;
            s / s.norm().max(1e-300)
        };
        let mut next = y + dir * h;
        let crossed = next.norm() >= 1.0;
        if crossed {
            next /= next.norm();
        }
        let (corrected, val) = newton_to_zero(u, next, scale);
        next = if crossed { corrected / corrected.norm() } else { corrected };
        let val = if crossed { u.eval(next) } else { val };
        max_res = max_res.max(val.abs());
        t_prev = dir;
        y = next;
        points.push(y);
        let (_, gv) = u.eval_with_gradient(y);
        record(y, gv[0].hypot(gv[1]), &mut speeds);
        if y.norm() < opts.pole_radius {
            return Ok((points, max_res, speeds, Endpoint::Pole));
        }
        if crossed || y.norm() > 1.0 - 1e-12 {
            return Ok((points, max_res, speeds, Endpoint::Boundary));
        }
    }
    Err(NodalError::MaxStepsExceeded(opts.max_steps))
}

/// Result of classifying a solved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalConfiguration {
    pub arc_count: usize,
    pub arcs: Vec<NodalCurve>,
    pub arcs_at_pole: usize,
    /// Pole-chart coefficients.
    pub leading: LeadingOrder,
    /// Nodal rays at the pole counted on a small circle (half the sign changes).
    pub rays_at_pole: usize,
}

/// Reference-chart lifts of a physical boundary angle.
pub fn boundary_lifts(a: PolePosition, theta: f64) -> [Complex64; 2] {
    let z = moebius_inverse(a, Complex64::from_polar(1.0, theta));
    let y = z.sqrt();
    [y / y.norm(), -y / y.norm()]
}

/// Sign changes of `u` on a circle of radius `rho`, halved.
pub fn rays_on_circle(u: &PolarField, rho: f64, samples: usize) -> usize {
    let vals: Vec<f64> = (0..samples).map(|m| u.eval(Complex64::from_polar(rho, TAU * (m as f64 + 0.5) / samples as f64))).collect();
    let changes = (0..samples).filter(|&m| vals[m] * vals[(m + 1) % samples] < 0.0).count();
    changes / 2
}

/// Traces every nodal arc from the sign-changing boundary zeros of the trace and
/// checks the topology: odd number of arcs at the pole, at most three arcs, and
/// three arcs exactly when the leading order is three.
pub fn classify_configuration(
    u: &PolarField,
    a: PolePosition,
    trace: &BoundaryTrace,
    tol: f64,
) -> Result<NodalConfiguration, NodalError> {
    let reference = leading_order(u, tol)?;
    let (c1, c3) = to_pole_chart(a, reference.first.complex(), reference.third.complex());
    let mut first = AsymptoticCoeffs::new(1, c1);
    first.residual = reference.first.residual;
    let mut third = AsymptoticCoeffs::new(3, c3);
    third.residual = reference.third.residual;
    let leading = classify_order(first, third, tol)?;
    let opts = TraceOptions::for_field(u);
    let zeros = trace.zeros();
    let lifts: Vec<[Complex64; 2]> = zeros.iter().map(|&z| boundary_lifts(a, z)).collect();
    let delta = 1e-4;
    let sign_changing: Vec<usize> = (0..3)
        .filter(|&i| {
            let y = lifts[i][0];
            let rot = Complex64::from_polar(1.0, delta);
            trace.cover_value(a, y * rot) * trace.cover_value(a, y * rot.conj()) < 0.0
        })
        .collect();
    let nearest_zero = |y: Complex64| -> Option<usize> {
        let mut best = (f64::INFINITY, 0);
        for (i, l) in lifts.iter().enumerate() {
            for &p in l {
                let d = (p - y).norm();
                if d < best.0 {
                    best = (d, i);
                }
            }
        }
        (best.0 < 10.0 * opts.step.max(u.grid().dphi())).then_some(best.1)
    };
    let mut arcs = Vec::new();
    let mut reached = vec![false; 3];
    for &i in &sign_changing {
        if reached[i] {
            continue;
        }
        reached[i] = true;
        let seed = lifts[i][0];
        let (seed, _) = newton_along_boundary(u, seed);
        let (t, _) = tangent(u, seed);
        let direction = if (t * seed.conj()).re < 0.0 { 1.0 } else { -1.0 };
        let (cover, res, speeds, end) = trace_from_boundary(u, a, seed, direction, &opts)?;
        let end = match end {
            Endpoint::Boundary => {
                let last = *cover.last().expect("nonempty");
                match nearest_zero(last) {
                    Some(j) => {
                        reached[j] = true;
                        Endpoint::BoundaryZero(j)
                    }
                    None => Endpoint::Boundary,
                }
            }
            other => other,
        };
        arcs.push(NodalCurve::from_cover(a, cover, Endpoint::BoundaryZero(i), end, res, speeds));
    }
    let arcs_at_pole = arcs.iter().filter(|c| c.end == Endpoint::Pole).count();
    let rays_at_pole = pole_rays(u, a, &leading);
    let arc_count = arcs.len();
    let problems = topology_problems(arc_count, arcs_at_pole, leading.order, &arcs);
    if let Some(p) = problems {
        return Err(NodalError::InconsistentTopology(p));
    }
    Ok(NodalConfiguration { arc_count, arcs, arcs_at_pole, leading, rays_at_pole })
}

/// Traces inward from a boundary zero. A curve that re-exits next to its own seed
/// has cut across a near-tangential departure, so the step is refined and the trace repeated.
fn trace_from_boundary(
    u: &PolarField,
    a: PolePosition,
    seed: Complex64,
    direction: f64,
    opts: &TraceOptions,
) -> Result<(Vec<Complex64>, f64, Vec<(f64, f64)>, Endpoint), NodalError> {
    let mut opts = *opts;
    let mut out = trace_nodal_curve(u, a, seed, direction, &opts)?;
    for _ in 0..3 {
        let last = *out.0.last().expect("nonempty");
        if out.3 != Endpoint::Boundary || (last - seed).norm() > 0.1 {
            break;
        }
        opts.step *= 0.25;
        opts.max_steps *= 4;
        out = trace_nodal_curve(u, a, seed, direction, &opts)?;
    }
    Ok(out)
}

fn topology_problems(arc_count: usize, at_pole: usize, order: u32, arcs: &[NodalCurve]) -> Option<String> {
    if at_pole % 2 == 0 {
        return Some(format!("{at_pole} arcs end at the pole"));
    }
    if arc_count > 3 {
        return Some(format!("{arc_count} arcs"));
    }
    if (arc_count == 3) != (order == 3) {
        return Some(format!("{arc_count} arcs with leading order {order}"));
    }
    if let Some(c) = arcs.iter().find(|c| c.end == Endpoint::Boundary) {
        return Some(format!("arc from {:?} ends on the boundary away from the zeros", c.start));
    }
    None
}

/// Rays at the pole from sign changes on a circle where the leading term dominates.
pub(crate) fn pole_rays(u: &PolarField, a: PolePosition, leading: &LeadingOrder) -> usize {
    let g = u.grid();
    let s = (1.0 - a.norm().powi(2)).sqrt();
    let floor = 3.0 * g.dr();
    let rho = if leading.order == 1 && leading.third.magnitude() > 0.0 {
        (0.3 * (3.0 * leading.first.magnitude() / leading.third.magnitude()).sqrt()).min(0.1)
    } else {
        0.1
    };
    rays_on_circle(u, (rho / s).max(floor), 4 * g.n_t())
}

/// Snaps a boundary seed onto the boundary zero of `u`.
fn newton_along_boundary(u: &PolarField, y: Complex64) -> (Complex64, f64) {
    let mut phi = y.arg();
    let d = 1e-6;
    let mut v = u.eval(y);
    for _ in 0..20 {
        v = u.eval(Complex64::from_polar(1.0, phi));
        let dv = (u.eval(Complex64::from_polar(1.0, phi + d)) - u.eval(Complex64::from_polar(1.0, phi - d))) / (2.0 * d);
        if dv == 0.0 || v.abs() < 1e-15 {
            break;
        }
        let step = (v / dv).clamp(-0.05, 0.05);
        phi -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    (Complex64::from_polar(1.0, phi), v)
}

/// Components of the C¹-type distance between two arcs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveDistance {
    pub hausdorff: f64,
    pub tangent: f64,
}

impl CurveDistance {
    pub fn total(&self) -> f64 {
        self.hausdorff + self.tangent
    }
}

fn resample(c: &NodalCurve, n: usize) -> Vec<Complex64> {
    let total = c.length();
    if total == 0.0 {
        return vec![c.points[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        while k + 2 < c.params.len() && c.params[k + 1] < s {
            k += 1;
        }
        let (s0, s1) = (c.params[k], c.params[k + 1]);
        let w = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        out.push(c.points[k] * (1.0 - w) + c.points[k + 1] * w);
    }
    out
}

fn point_segment(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let t = if d.norm_sqr() > 0.0 { ((p - a) * d.conj()).re / d.norm_sqr() } else { 0.0 };
    (a + d * t.clamp(0.0, 1.0) - p).norm()
}

fn directed_hausdorff(p: &[Complex64], q: &[Complex64]) -> f64 {
    p.iter()
        .map(|&x| {
            if q.len() == 1 {
                return (x - q[0]).norm();
            }
            q.windows(2).map(|s| point_segment(x, s[0], s[1])).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between polylines plus the largest tangent-angle
/// difference after arc-length reparametrization (orientations aligned first).
pub fn curve_distance_parts(c1: &NodalCurve, c2: &NodalCurve) -> Result<CurveDistance, NodalError> {
    if c1.points.len() < 2 || c2.points.len() < 2 {
        return Err(NodalError::EmptyCurve);
    }
    let hausdorff = directed_hausdorff(&c1.points, &c2.points).max(directed_hausdorff(&c2.points, &c1.points));
    let aligned = if (c1.points[0] - c2.points[0]).norm() > (c1.points[0] - c2.points[c2.points.len() - 1]).norm() {
        c2.reversed()
    } else {
        c2.clone()
    };
    let n = 200;
    let p = resample(c1, n);
    let q = resample(&aligned, n);
    let mut tangent = 0.0f64;
    for i in 0..n - 1 {
        let (a, b) = (p[i + 1] - p[i], q[i + 1] - q[i]);
        if a.norm() > 0.0 && b.norm() > 0.0 {
            tangent = tangent.max((a * b.conj()).arg().abs());
        }
    }
    Ok(CurveDistance { hausdorff, tangent })
}

pub fn curve_distance(c1: &NodalCurve, c2: &NodalCurve) -> Result<f64, NodalError> {
    curve_distance_parts(c1, c2).map(|d| d.total())
}

/// SVG of the disk outline, the pole and the arcs.
pub fn nodal_svg(config: &NodalConfiguration, a: PolePosition, size: f64) -> String {
    let c = size / 2.0;
    let r = 0.45 * size;
    let map = |p: Complex64| (c + r * p.re, c - r * p.im);
    let mut out = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
    let _ = write!(out, r##"<circle cx="{c}" cy="{c}" r="{r}" fill="none" stroke="#333" stroke-width="1.5"/>"##);
    let colors = ["#c0392b", "#2471a3", "#229954"];
    for (i, arc) in config.arcs.iter().enumerate() {
        let pts: Vec<String> = arc.points.iter().map(|&p| {
            let (x, y) = map(p);
            format!("{x:.2},{y:.2}")
        }).collect();
        let _ = write!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), colors[i % 3]);
    }
    let (px, py) = map(a.z());
    let _ = write!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="black"/>"#);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::grid::PolarGrid;

    fn grid() -> PolarGrid {
        PolarGrid::new(48, 96).unwrap()
    }

    fn mode(k: i32, c: f64, d: f64) -> impl Fn(Complex64) -> f64 {
        move |y: Complex64| {
            let (r, p) = (y.norm(), y.arg());
            r.powi(k) / k as f64 * (c * (k as f64 * p).cos() + d * (k as f64 * p).sin())
        }
    }

    #[test]
    fn pure_modes_are_recovered() {
        let u = PolarField::from_fn(grid(), mode(1, 1.0, 0.0));
        let c = fourier_coeff_extract(&u, 1, &DEFAULT_RADII).unwrap();
        assert!((c.c - 1.0).abs() < 1e-10 && c.d.abs() < 1e-10);
        let u = PolarField::from_fn(grid(), mode(3, 2.0, -1.0));
        let c = fourier_coeff_extract(&u, 3, &DEFAULT_RADII).unwrap();
        assert!((c.c - 2.0).abs() < 1e-10 && (c.d + 1.0).abs() < 1e-10, "{c:?}");
        assert!(fourier_coeff_extract(&u, 1, &DEFAULT_RADII).unwrap().magnitude() < 1e-10);
        assert!(even_mode_content(&u, 0.3) < 1e-12);
        assert!(matches!(fourier_coeff_extract(&u, 1, &[0.1, 0.999]), Err(NodalError::RadiusOutOfGrid(_))));
    }

    #[test]
    fn cauchy_matches_on_harmonic_modes() {
        let zero = PolarField::zeros(grid());
        let u = PolarField::from_fn(grid(), mode(1, 1.0, 0.0));
        let c = cauchy_coeff_extract(&u, &zero, 1, 0.5, None).unwrap();
        assert!((c.c - 1.0).abs() < 1e-8 && c.d.abs() < 1e-8, "{c:?}");
        let u = PolarField::from_fn(grid(), mode(3, 1.0, 0.0));
        let c = cauchy_coeff_extract(&u, &zero, 3, 0.5, Some(1e-6)).unwrap();
        assert!((c.c - 1.0).abs() < 1e-8 && c.d.abs() < 1e-8, "{c:?}");
        let mixed = PolarField::from_fn(grid(), |y| mode(1, 0.3, 0.0)(y) + mode(3, 1.0, 0.0)(y));
        assert!(matches!(
            cauchy_coeff_extract(&mixed, &zero, 3, 0.5, Some(1e-6)),
            Err(NodalError::LowerOrderNotSmall { order: 1, .. })
        ));
    }

    #[test]
    fn leading_order_selection() {
        let u = PolarField::from_fn(grid(), |y| mode(1, 1e-3, 0.0)(y) + mode(3, 1.0, 0.5)(y));
        assert_eq!(leading_order(&u, 1e-4).unwrap().order, 1);
        let u = PolarField::from_fn(grid(), mode(3, 1.0, 0.5));
        assert_eq!(leading_order(&u, 1e-4).unwrap().order, 3);
        assert!(matches!(leading_order(&PolarField::zeros(grid()), 1e-4), Err(NodalError::Degenerate { .. })));
    }

    #[test]
    fn tracer_follows_diameter() {
        let g = PolarGrid::new(96, 192).unwrap();
        let u = PolarField::from_fn(g, mode(1, 1.0, 0.0));
        let opts = TraceOptions::for_field(&u);
        let o = PolePosition::origin();
        let (pts, res, _, end) = trace_nodal_curve(&u, o, Complex64::new(0.0, 1.0), -1.0, &opts).unwrap();
        assert_eq!(end, Endpoint::Pole);
        assert!(pts.iter().all(|p| p.re.abs() < 1e-6), "{:?}", pts.iter().map(|p| p.re.abs()).fold(0.0, f64::max));
        assert!(res < 1e-6 * u.sup_norm());
    }

    #[test]
    fn tracer_follows_three_rays() {
        let g = PolarGrid::new(96, 192).unwrap();
        let u = PolarField::from_fn(g, mode(3, 1.0, 0.0));
        let opts = TraceOptions::for_field(&u);
        let o = PolePosition::origin();
        for &phi in &[PI / 6.0, PI / 2.0, 5.0 * PI / 6.0] {
            let seed = Complex64::from_polar(1.0, phi);
            let (t, _) = tangent(&u, seed);
            let dir = if (t * seed.conj()).re < 0.0 { 1.0 } else { -1.0 };
            let (pts, _, speeds, end) = trace_nodal_curve(&u, o, seed, dir, &opts).unwrap();
            assert_eq!(end, Endpoint::Pole);
            let dev = pts.iter().map(|p| (p * Complex64::from_polar(1.0, -phi)).im.abs()).fold(0.0, f64::max);
            assert!(dev < 1e-5, "φ={phi} dev={dev}");
            let curve = NodalCurve::from_cover(o, pts, Endpoint::Boundary, end, 0.0, speeds);
            let v = curve.pole_speed_limit(0.1, 0.25).unwrap();
            assert!((v - 1.0).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn distance_of_translated_segments() {
        let mk = |shift: Complex64| {
            let cover: Vec<Complex64> = vec![];
            let mut c = NodalCurve::from_cover(PolePosition::origin(), cover, Endpoint::Pole, Endpoint::Pole, 0.0, vec![]);
            c.points = (0..=50).map(|i| Complex64::new(-0.5 + i as f64 / 50.0, 0.0) + shift).collect();
            c.params = (0..=50).map(|i| i as f64 / 50.0).collect();
            c
        };
        let a = mk(Complex64::new(0.0, 0.0));
        assert_eq!(curve_distance(&a, &a).unwrap(), 0.0);
        let b = mk(Complex64::new(0.0, 0.01));
        let d = curve_distance_parts(&a, &b).unwrap();
        assert!((d.hausdorff - 0.01).abs() < 1e-15 && d.tangent < 1e-12);
        assert!((curve_distance(&a, &b.reversed()).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn pole_chart_conversion_consistent() {
        // u⁽²⁾ = Re[C₁ y + C₃ y³/3] sampled in the pole chart through the chart map.
        let a = PolePosition::new(0.3, -0.2).unwrap();
        let (c1, c3) = (Complex64::new(0.4, -0.1), Complex64::new(1.0, 0.7));
        let (p1, p3) = to_pole_chart(a, c1, c3);
        let f = |y2: Complex64| (c1 * y2 + c3 * y2 * y2 * y2 / 3.0).re;
        let g = PolarGrid::new(96, 192).unwrap();
        let u1 = PolarField::from_fn(g, |w| f(crate::geometry::chart_map_inverse(a, w * 0.5)));
        // Field in the scaled pole chart w = y₁/0.5.
        let e1 = fourier_coeff_extract(&u1, 1, &DEFAULT_RADII).unwrap().complex() / 0.5;
        let e3 = fourier_coeff_extract(&u1, 3, &DEFAULT_RADII).unwrap().complex() / 0.125;
        assert!((e1 - p1).norm() < 1e-6 * p1.norm(), "{e1} vs {p1}");
        assert!((e3 - p3).norm() < 1e-4 * p3.norm(), "{e3} vs {p3}");
    }
}
