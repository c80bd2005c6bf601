//! Magnetic potential, gauge phase and circulation.
//!
//! The phase is `Θ = (2n+1)/2 · ϑ_a + Φ`, with `ϑ_a` the angle about the pole
//! and `Φ` harmonic. On the cover `e^{iΘ} = (y₁/|y₁|)^{2n+1} e^{iΦ(x)}` with
//! `y₁² = x − a`, which is single valued there and flips sign after one
//! physical loop around the pole.

use crate::geometry::{chart_map, PolePosition};
use crate::grid::{PolarField, PolarGrid};
use crate::trace::{sheet_root, BoundaryTrace};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaugeError {
    #[error("potential evaluated at distance {0:.3e} from the pole")]
    PoleEvaluation(f64),
    #[error("loop passes within {0:.3e} of the pole")]
    PoleOnLoop(f64),
    #[error("loop needs at least three vertices")]
    DegenerateLoop,
}

pub const DEFAULT_MODES: usize = 128;
const BOUNDARY_SAMPLES: usize = 4096;
const POLE_EPS: f64 = 1e-9;

/// Harmonic function on the unit disk stored as `a₀ + Re Σ_{k≥1} c_k z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicExtension {
    mean: f64,
    coeffs: Vec<Complex64>,
}

impl HarmonicExtension {
    /// Fourier fit of uniform boundary samples, truncated at `modes`.
    pub fn from_samples(samples: &[f64], modes: usize) -> Self {
        let n = samples.len();
        let modes = modes.min((n - 1) / 2);
        let mean = samples.iter().sum::<f64>() / n as f64;
        let coeffs = (1..=modes)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, &v) in samples.iter().enumerate() {
                    acc += v * Complex64::from_polar(1.0, -TAU * (k * m % n) as f64 / n as f64);
                }
                // a_k − i b_k = (2/N) Σ f e^{−ikθ}
                acc * (2.0 / n as f64)
            })
            .collect();
        Self { mean, coeffs }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `(a_k, b_k)` for `k = 1..`.
    pub fn cos_sin(&self, k: usize) -> (f64, f64) {
        self.coeffs.get(k - 1).map_or((0.0, 0.0), |c| (c.re, -c.im))
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: Complex64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = (acc + c) * x;
        }
        self.mean + acc.re
    }

    /// Cartesian gradient: `∇ Re F = (Re F′, −Im F′)`.
    pub fn gradient(&self, x: Complex64) -> [f64; 2] {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * x + c * (k + 1) as f64;
        }
        [acc.re, -acc.im]
    }

    /// Exact Dirichlet energy `π Σ k |c_k|²`.
    pub fn energy(&self) -> f64 {
        PI * self.coeffs.iter().enumerate().map(|(k, c)| (k + 1) as f64 * c.norm_sqr()).sum::<f64>()
    }

    pub fn to_field(&self, grid: PolarGrid) -> PolarField {
        PolarField::from_fn(grid, |x| self.eval(x))
    }

    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &Vec<Complex64>, k: usize| v.get(k).copied().unwrap_or_default();
        Self {
            mean: alpha * self.mean + beta * other.mean,
            coeffs: (0..n).map(|k| alpha * get(&self.coeffs, k) + beta * get(&other.coeffs, k)).collect(),
        }
    }

    /// Maximal mismatch against the samples it was fitted to.
    pub fn sample_residual(&self, samples: &[f64]) -> f64 {
        let n = samples.len();
        samples
            .iter()
            .enumerate()
            .map(|(m, &v)| (self.eval(Complex64::from_polar(1.0, TAU * m as f64 / n as f64)) - v).abs())
            .fold(0.0, f64::max)
    }
}

/// Harmonic extension of uniform boundary samples evaluated on a grid.
pub fn harmonic_extension(grid: PolarGrid, boundary: &[f64]) -> PolarField {
    HarmonicExtension::from_samples(boundary, DEFAULT_MODES).to_field(grid)
}

/// `ψ` sampled on the boundary: `(Γ/|Γ|)²` where the trace is nonzero, unit-modulus
/// linear phase interpolation across its zeros.
pub fn trace_phase(trace: &BoundaryTrace, samples: usize) -> Vec<Complex64> {
    let theta: Vec<f64> = (0..samples).map(|m| TAU * m as f64 / samples as f64).collect();
    let floor = 1e-14 * trace.scale().max(1e-300);
    let raw: Vec<Option<Complex64>> = theta
        .iter()
        .map(|&t| {
            let g = trace.complex_trace(t);
            (g.norm() > floor).then(|| {
                let u = g / g.norm();
                u * u
            })
        })
        .collect();
    let mut out = vec![Complex64::new(1.0, 0.0); samples];
    for m in 0..samples {
        out[m] = match raw[m] {
            Some(p) => p,
            None => {
                let prev = (1..samples).find_map(|d| raw[(m + samples - d) % samples].map(|p| (d, p)));
                let next = (1..samples).find_map(|d| raw[(m + d) % samples].map(|p| (d, p)));
                match (prev, next) {
                    (Some((dp, p)), Some((dn, q))) => {
                        let jump = (q / p).arg();
                        p * Complex64::from_polar(1.0, jump * dp as f64 / (dp + dn) as f64)
                    }
                    _ => Complex64::new(1.0, 0.0),
                }
            }
        };
    }
    out
}

/// Gauge phase of a pole and a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugePhase {
    pole: PolePosition,
    winding: i32,
    seam: f64,
    harmonic: HarmonicExtension,
    boundary_data: Vec<f64>,
}

/// Continuous angle about the pole on the boundary, `θ' + Arg(1 − a e^{−iθ})` for
/// `θ'` reduced into `[seam, seam + 2π)`.
fn boundary_pole_angle(a: PolePosition, seam: f64, theta: f64) -> f64 {
    let t = seam + (theta - seam).rem_euclid(TAU);
    t + (1.0 - a.z() * Complex64::from_polar(1.0, -theta)).arg()
}

pub fn build_gauge(a: PolePosition, trace: &BoundaryTrace) -> GaugePhase {
    let n = BOUNDARY_SAMPLES;
    let psi = trace_phase(trace, n);
    let seam = trace.seam();
    let half_winding = 0.5 * trace.winding() as f64;
    // Unwrap arg ψ along the boundary starting at the seam.
    let start = ((seam / TAU * n as f64).ceil() as usize) % n;
    let mut unwrapped = vec![0.0; n];
    let first_offset = (TAU * start as f64 / n as f64 - seam).rem_euclid(TAU);
    let mut prev_arg = psi[start].arg();
    let mut acc = trace.winding() as f64 * first_offset;
    acc += (psi[start] * Complex64::from_polar(1.0, -acc)).arg();
    unwrapped[start] = acc;
    for d in 1..n {
        let m = (start + d) % n;
        let step = (psi[m] * Complex64::from_polar(1.0, -prev_arg)).arg();
        acc += step;
        prev_arg = psi[m].arg();
        unwrapped[m] = acc;
    }
    let boundary_data: Vec<f64> = (0..n)
        .map(|m| {
            let theta = TAU * m as f64 / n as f64;
            0.5 * unwrapped[m] - half_winding * boundary_pole_angle(a, seam, theta)
        })
        .collect();
    let modes = if a.norm() > 0.0 {
        ((1e-14f64.ln() / a.norm().ln()).ceil() as usize).clamp(DEFAULT_MODES, n / 2 - 1)
    } else {
        DEFAULT_MODES
    };
    let harmonic = HarmonicExtension::from_samples(&boundary_data, modes);
    GaugePhase { pole: a, winding: trace.winding(), seam, harmonic, boundary_data }
}

impl GaugePhase {
    pub fn pole(&self) -> PolePosition {
        self.pole
    }

    pub fn winding(&self) -> i32 {
        self.winding
    }

    pub fn harmonic(&self) -> &HarmonicExtension {
        &self.harmonic
    }

    pub fn harmonic_field(&self, grid: PolarGrid) -> PolarField {
        self.harmonic.to_field(grid)
    }

    /// Mismatch of the Fourier representation at the boundary samples it was built from.
    pub fn fit_residual(&self) -> f64 {
        self.harmonic.sample_residual(&self.boundary_data)
    }

    /// `e^{iΘ}` at the cover point with pole-chart coordinate `y₁` (`x = y₁² + a`).
    pub fn cover_phase(&self, y1: Complex64) -> Complex64 {
        let x = y1 * y1 + self.pole.z();
        let u = y1 / y1.norm();
        u.powi(self.winding) * Complex64::from_polar(1.0, self.harmonic.eval(x))
    }

    /// The antisymmetric square root of `ψ` at a reference-chart boundary point.
    pub fn boundary_root(&self, y: Complex64) -> Complex64 {
        let x = crate::geometry::reference_to_physical(self.pole, y);
        let theta = self.seam + (x.arg() - self.seam).rem_euclid(TAU);
        let y1 = chart_map(self.pole, y);
        let s = if (y1 * sheet_root(self.pole, theta).conj()).re >= 0.0 { 1.0 } else { -1.0 };
        s * Complex64::from_polar(1.0, 0.5 * self.winding as f64 * (theta - self.seam))
    }

    /// Worst `|e^{iΘ} − ψ^{1/2}|` over `samples` reference boundary points.
    pub fn boundary_mismatch(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|m| {
                let y = Complex64::from_polar(1.0, TAU * (m as f64 + 0.5) / samples as f64);
                (self.cover_phase(chart_map(self.pole, y)) - self.boundary_root(y)).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn vector_potential(&self) -> VectorPotential {
        VectorPotential { pole: self.pole, winding: self.winding, gauge: Some(self.harmonic.clone()) }
    }
}

/// `A = (2n+1)/2 · (−(x₂−a₂), x₁−a₁)/|x−a|² + ∇Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPotential {
    pub pole: PolePosition,
    pub winding: i32,
    pub gauge: Option<HarmonicExtension>,
}

impl VectorPotential {
    pub fn pure(pole: PolePosition, winding: i32) -> Self {
        Self { pole, winding, gauge: None }
    }

    pub fn with_gauge(mut self, gauge: HarmonicExtension) -> Self {
        self.gauge = Some(gauge);
        self
    }
}

pub fn vector_potential_at(a: &VectorPotential, x: Complex64) -> Result<[f64; 2], GaugeError> {
    let d = x - a.pole.z();
    let r2 = d.norm_sqr();
    if r2.sqrt() < POLE_EPS {
        return Err(GaugeError::PoleEvaluation(r2.sqrt()));
    }
    let c = 0.5 * a.winding as f64 / r2;
    let g = a.gauge.as_ref().map_or([0.0, 0.0], |h| h.gradient(x));
    Ok([-c * d.im + g[0], c * d.re + g[1]])
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn segment_distance(p: Complex64, q: Complex64, c: Complex64) -> f64 {
    let d = q - p;
    let t = if d.norm_sqr() > 0.0 { ((c - p) * d.conj()).re / d.norm_sqr() } else { 0.0 };
    (p + d * t.clamp(0.0, 1.0) - c).norm()
}

/// `(1/2π) ∮ A·dx` over the closed polyline (last vertex joins the first).
pub fn circulation(a: &VectorPotential, polyline: &[Complex64]) -> Result<f64, GaugeError> {
    if polyline.len() < 3 {
        return Err(GaugeError::DegenerateLoop);
    }
    let mut total = 0.0;
    for k in 0..polyline.len() {
        let p = polyline[k];
        let q = polyline[(k + 1) % polyline.len()];
        let dist = segment_distance(p, q, a.pole.z());
        if dist < POLE_EPS {
            return Err(GaugeError::PoleOnLoop(dist));
        }
        let pieces = ((q - p).norm() / (0.5 * dist)).ceil().clamp(1.0, 1e5) as usize;
        for s in 0..pieces {
            let p0 = p + (q - p) * (s as f64 / pieces as f64);
            let p1 = p + (q - p) * ((s + 1) as f64 / pieces as f64);
            let mid = 0.5 * (p0 + p1);
            let half = 0.5 * (p1 - p0);
            for (&t, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                let v = vector_potential_at(a, mid + half * t)?;
                total += w * (v[0] * half.re + v[1] * half.im);
            }
        }
    }
    Ok(total / TAU)
}

/// Circle of `n` vertices.
pub fn circle_loop(center: Complex64, radius: f64, n: usize) -> Vec<Complex64> {
    (0..n).map(|k| center + Complex64::from_polar(radius, TAU * k as f64 / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::dirichlet_energy;
    use crate::trace::Shape;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn samples(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|m| f(TAU * m as f64 / n as f64)).collect()
    }

    fn generic_trace() -> BoundaryTrace {
        BoundaryTrace::bumps(
            [0.5, 2.2, 4.0],
            [
                Shape::Bump { amp: 1.0, power: 1.0, tilt: 0.2 },
                Shape::Bump { amp: 0.6, power: 2.0, tilt: 0.0 },
                Shape::Bump { amp: 1.4, power: 1.0, tilt: -0.3 },
            ],
            [1, -1, 1],
        )
        .unwrap()
    }

    #[test]
    fn extension_of_low_modes() {
        let h = HarmonicExtension::from_samples(&samples(256, |t| t.cos()), 128);
        let x = c(0.3, -0.5);
        assert!((h.eval(x) - 0.3).abs() < 1e-13);
        let h = HarmonicExtension::from_samples(&samples(256, |_| 2.5), 128);
        assert!((h.eval(x) - 2.5).abs() < 1e-13);
        let h = HarmonicExtension::from_samples(&samples(256, |t| (3.0 * t).sin()), 128);
        assert!((h.eval(x) - (x * x * x).im).abs() < 1e-13);
        let g = h.gradient(x);
        let d = 1e-6;
        let fx = (h.eval(x + d) - h.eval(x - d)) / (2.0 * d);
        let fy = (h.eval(x + c(0.0, d)) - h.eval(x - c(0.0, d))) / (2.0 * d);
        assert!((g[0] - fx).abs() < 1e-8 && (g[1] - fy).abs() < 1e-8);
    }

    #[test]
    fn extension_of_abs_cos() {
        let h = HarmonicExtension::from_samples(&samples(4096, |t| t.cos().abs()), 128);
        // (2/π)[1 + 2 Σ (−1)ⁿ/(1−4n²) r^{2n} cos 2nθ]
        let x = c(0.4, 0.3);
        let (r, th) = (x.norm(), x.arg());
        let series = (2.0 / PI)
            * (1.0
                + 2.0
                    * (1..2000)
                        .map(|n| {
                            let n = n as f64;
                            (-1f64).powf(n) / (1.0 - 4.0 * n * n) * r.powf(2.0 * n) * (2.0 * n * th).cos()
                        })
                        .sum::<f64>());
        assert!((h.eval(x) - series).abs() < 1e-6);
        let reference = (32.0 / PI) * (1..1_000_000).map(|n| n as f64 / (1.0 - 4.0 * (n as f64).powi(2)).powi(2)).sum::<f64>();
        assert!((h.energy() - reference).abs() < 1e-3 * reference);
        assert!((reference - 4.0 / PI).abs() < 1e-9);
        // The kinks of the datum make the grid quadrature first order.
        let field = h.to_field(PolarGrid::new(192, 384).unwrap());
        let e = dirichlet_energy(&field, &PolarField::zeros(field.grid()));
        assert!((e - reference).abs() < 0.01 * reference, "{e} vs {reference}");
    }

    #[test]
    fn extension_is_linear() {
        let f = samples(512, |t| (t.sin() * 3.0).exp());
        let g = samples(512, |t| t.cos().powi(3));
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let hf = HarmonicExtension::from_samples(&f, 128);
        let hg = HarmonicExtension::from_samples(&g, 128);
        let combo = hf.linear_combination(2.0, &hg, -0.5);
        let direct = HarmonicExtension::from_samples(&fg, 128);
        let x = c(-0.2, 0.7);
        assert!((combo.eval(x) - direct.eval(x)).abs() < 1e-12);
    }

    #[test]
    fn gauge_at_origin_is_constant() {
        let g = build_gauge(PolePosition::origin(), &BoundaryTrace::symmetric());
        for k in 1..10 {
            let (a, b) = g.harmonic().cos_sin(k);
            assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
        }
        assert!(g.boundary_mismatch(512) < 1e-8);
    }

    #[test]
    fn gauge_matches_closed_form() {
        let tr = generic_trace();
        let a = PolePosition::new(0.3, 0.0).unwrap();
        let g = build_gauge(a, &tr);
        assert!(g.fit_residual() < 1e-10, "{}", g.fit_residual());
        // Φ(x) = −(2n+1)/2 (θ_seam − Arg(1 − ā x)) up to the common offset.
        let closed = |x: Complex64| -0.5 * (tr.seam() - (1.0 - a.z().conj() * x).arg());
        let offset = g.harmonic().eval(c(0.0, 0.0)) - closed(c(0.0, 0.0));
        for &x in &[c(0.5, 0.2), c(-0.7, 0.1), c(0.1, -0.9)] {
            assert!((g.harmonic().eval(x) - closed(x) - offset).abs() < 1e-10);
        }
        assert!(offset.abs() < 1e-10);
        assert!(g.boundary_mismatch(777) < 1e-8, "{}", g.boundary_mismatch(777));
    }

    #[test]
    fn cover_phase_flips_after_a_loop() {
        let tr = generic_trace().with_winding(3).unwrap();
        let a = PolePosition::new(-0.2, 0.35).unwrap();
        let g = build_gauge(a, &tr);
        assert!(g.boundary_mismatch(300) < 1e-8);
        // Follow y₁ = √(x − a) continuously along a physical circle around a.
        let n = 400;
        let mut y1 = Complex64::new(0.3f64.sqrt(), 0.0);
        let start = g.cover_phase(y1);
        for k in 1..=n {
            let x = a.z() + Complex64::from_polar(0.3, TAU * k as f64 / n as f64);
            let r = (x - a.z()).sqrt();
            y1 = if (r - y1).norm() < (r + y1).norm() { r } else { -r };
        }
        let end = g.cover_phase(y1);
        assert!((end + start).norm() < 1e-10);
    }

    #[test]
    fn potential_formula() {
        let pure = VectorPotential::pure(PolePosition::origin(), 1);
        let v = vector_potential_at(&pure, c(1.0, 0.0)).unwrap();
        assert!((v[0]).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        let v = vector_potential_at(&pure, c(0.0, 0.25)).unwrap();
        assert!((v[0] + 2.0).abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!(matches!(vector_potential_at(&pure, c(0.0, 0.0)), Err(GaugeError::PoleEvaluation(_))));
    }

    #[test]
    fn gauge_potential_is_curl_free() {
        let a = PolePosition::new(0.3, -0.1).unwrap();
        let pot = build_gauge(a, &generic_trace()).vector_potential();
        let d = 1e-4;
        for &x in &[c(0.6, 0.3), c(-0.5, -0.2), c(0.0, 0.7)] {
            let ay = |p: Complex64| vector_potential_at(&pot, p).unwrap();
            let curl = (ay(x + d)[1] - ay(x - d)[1]) / (2.0 * d) - (ay(x + c(0.0, d))[0] - ay(x - c(0.0, d))[0]) / (2.0 * d);
            assert!(curl.abs() < 1e-6, "{curl}");
        }
    }

    #[test]
    fn circulation_is_quantized() {
        let a = PolePosition::new(0.2, 0.1).unwrap();
        let pure = VectorPotential::pure(a, 1);
        let around = circle_loop(a.z(), 0.4, 200);
        assert!((circulation(&pure, &around).unwrap() - 0.5).abs() < 1e-6);
        let outside = circle_loop(c(-0.5, -0.4), 0.2, 200);
        assert!(circulation(&pure, &outside).unwrap().abs() < 1e-6);
        let gauged = build_gauge(a, &generic_trace()).vector_potential();
        assert!((circulation(&gauged, &around).unwrap() - 0.5).abs() < 1e-6);
        // A square traversed twice winds twice.
        let sq = [c(-0.3, -0.3), c(0.6, -0.3), c(0.6, 0.6), c(-0.3, 0.6)];
        let twice: Vec<Complex64> = sq.iter().chain(sq.iter()).copied().collect();
        assert!((circulation(&pure, &twice).unwrap() - 1.0).abs() < 1e-6);
        let w3 = VectorPotential::pure(a, 3);
        assert!((circulation(&w3, &around).unwrap() - 1.5).abs() < 1e-6);
        let through = [a.z() - 0.1, a.z() + 0.1, a.z() + c(0.0, 0.2)];
        assert!(matches!(circulation(&pure, &through), Err(GaugeError::PoleOnLoop(_))));
    }
}
