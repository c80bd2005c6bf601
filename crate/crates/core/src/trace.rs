//! Boundary traces made of three nonnegative arc profiles with a sign pattern.
//!
//! The zero at the start of arc 1 is the seam: the real trace on the cover is
//! `Σ σᵢ γᵢ(θ)` for `θ ∈ [θ_seam, θ_seam + 2π)` on one sheet and its negative on
//! the other, which is continuous because the trace vanishes at the seam.

use crate::geometry::{chart_map, moebius_inverse, reference_to_physical, PolePosition};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("supports overlap near θ = {theta:.4} (arcs {first} and {second})")]
    OverlappingSupports { theta: f64, first: usize, second: usize },
    #[error("arc {arc} is negative ({value:.3e}) at θ = {theta:.4}")]
    NegativeProfile { arc: usize, theta: f64, value: f64 },
    #[error("total modulus vanishes {count} times, expected 3")]
    WrongZeroCount { count: usize },
    #[error("arc {arc} does not occupy a single interval between consecutive zeros")]
    BrokenSupport { arc: usize },
    #[error("sign of arc {arc} must be +1 or -1 and constant, found {value}")]
    BadSign { arc: usize, value: f64 },
    #[error("need at least 64 uniform samples, got {0}")]
    TooFewSamples(usize),
    #[error("malformed trace table: {0}")]
    Parse(String),
    #[error("profile parameter out of range: {0}")]
    BadParameter(String),
}

/// Shape of one arc profile on its support, `t ∈ [0, 1]` the normalized position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// `amp · sin(πt)^power · (1 + tilt · sin 2πt)`, `|tilt| < 1`.
    Bump { amp: f64, power: f64, tilt: f64 },
    /// Uniform samples over the closed support, cubic interpolation in between.
    Table(Vec<f64>),
}

impl Shape {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Shape::Bump { amp, power, tilt } => {
                let s = (PI * t).sin().max(0.0);
                amp * s.powf(*power) * (1.0 + tilt * (TAU * t).sin())
            }
            Shape::Table(samples) => table_eval(samples, t),
        }
    }
}

fn table_eval(samples: &[f64], t: f64) -> f64 {
    let n = samples.len() - 1;
    let s = (t * n as f64).clamp(0.0, n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let u = s - i as f64;
    let at = |k: isize| -> f64 {
        if k < 0 {
            // Odd reflection keeps the derivative at the endpoint.
            2.0 * samples[0] - samples[(-k) as usize]
        } else if k as usize > n {
            2.0 * samples[n] - samples[2 * n - k as usize]
        } else {
            samples[k as usize]
        }
    };
    let i = i as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    // Catmull–Rom
    let v = p1
        + 0.5 * u * (p2 - p0 + u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + u * (3.0 * (p1 - p2) + p3 - p0)));
    v.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    /// Start angle in `[0, 2π)`.
    pub start: f64,
    /// Angular length, the support is `[start, start + length)`.
    pub length: f64,
    pub shape: Shape,
}

impl Arc {
    fn local(&self, theta: f64) -> Option<f64> {
        let d = (theta - self.start).rem_euclid(TAU);
        (d < self.length).then(|| d / self.length)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.local(theta).map_or(0.0, |t| self.shape.eval(t))
    }
}

/// Validated boundary datum: three arcs, their signs and the winding `2n+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    arcs: [Arc; 3],
    signs: [i8; 3],
    winding: i32,
}

impl BoundaryTrace {
    /// Three bumps meeting at the zeros `z₁ < z₂ < z₃` (radians, arc `i` starts at `zᵢ`).
    pub fn bumps(zeros: [f64; 3], shapes: [Shape; 3], signs: [i8; 3]) -> Result<Self, TraceError> {
        let mut z = zeros.map(|t| t.rem_euclid(TAU));
        let order_ok = {
            let d1 = (z[1] - z[0]).rem_euclid(TAU);
            let d2 = (z[2] - z[0]).rem_euclid(TAU);
            d1 > 0.0 && d2 > d1
        };
        if !order_ok {
            return Err(TraceError::BadParameter("zeros must be distinct and counterclockwise".into()));
        }
        let lengths = [
            (z[1] - z[0]).rem_euclid(TAU),
            (z[2] - z[1]).rem_euclid(TAU),
            (z[0] - z[2]).rem_euclid(TAU),
        ];
        for (i, s) in shapes.iter().enumerate() {
            match s {
                Shape::Bump { amp, power, tilt } => {
                    if *amp < 0.0 || *power < 1.0 || tilt.abs() >= 1.0 {
                        return Err(TraceError::BadParameter(format!(
                            "arc {}: amp ≥ 0, power ≥ 1, |tilt| < 1 required",
                            i + 1
                        )));
                    }
                }
                Shape::Table(v) => {
                    if v.len() < 4 {
                        return Err(TraceError::BadParameter(format!("arc {}: table too short", i + 1)));
                    }
                }
            }
        }
        for s in signs {
            if s != 1 && s != -1 {
                return Err(TraceError::BadSign { arc: 0, value: s as f64 });
            }
        }
        let [s0, s1, s2] = shapes;
        let arcs = [
            Arc { start: z[0], length: lengths[0], shape: s0 },
            Arc { start: z[1], length: lengths[1], shape: s1 },
            Arc { start: z[2], length: lengths[2], shape: s2 },
        ];
        z.sort_by(f64::total_cmp);
        Ok(Self { arcs, signs, winding: 1 })
    }

    /// The canonical symmetric trace: equal `sin` bumps on thirds of the circle with alternating signs.
    pub fn symmetric() -> Self {
        let bump = Shape::Bump { amp: 1.0, power: 1.0, tilt: 0.0 };
        Self::bumps([0.0, TAU / 3.0, 2.0 * TAU / 3.0], [bump.clone(), bump.clone(), bump], [1, -1, 1])
            .expect("canonical trace is valid")
    }

    /// Random trace: zeros at least 0.6 rad apart, random bump shapes and signs.
    pub fn random(rng: &mut impl rand::Rng) -> Self {
        loop {
            let mut z = [0, 1, 2].map(|_| rng.random_range(0.0..TAU));
            z.sort_by(f64::total_cmp);
            let gaps = [z[1] - z[0], z[2] - z[1], z[0] + TAU - z[2]];
            if gaps.iter().any(|&g| g < 0.6) {
                continue;
            }
            let shapes = [0, 1, 2].map(|_| Shape::Bump {
                amp: rng.random_range(0.5..1.5),
                power: rng.random_range(1.0..2.5),
                tilt: rng.random_range(-0.5..0.5),
            });
            let signs = [0, 1, 2].map(|_| if rng.random_bool(0.5) { 1 } else { -1 });
            if let Ok(t) = Self::bumps(z, shapes, signs) {
                return t;
            }
        }
    }

    /// Number of zeros where the cover trace changes sign.
    pub fn sign_changes(&self) -> usize {
        (0..3)
            .filter(|&i| {
                let prev = if i == 0 { -self.signs[2] } else { self.signs[i - 1] };
                prev * self.signs[i] < 0
            })
            .count()
    }

    pub fn with_winding(mut self, winding: i32) -> Result<Self, TraceError> {
        if winding % 2 == 0 {
            return Err(TraceError::BadParameter(format!("winding {winding} must be odd")));
        }
        self.winding = winding;
        Ok(self)
    }

    pub fn arcs(&self) -> &[Arc; 3] {
        &self.arcs
    }

    pub fn signs(&self) -> [i8; 3] {
        self.signs
    }

    pub fn winding(&self) -> i32 {
        self.winding
    }

    /// Angle of the seam zero (start of arc 1).
    pub fn seam(&self) -> f64 {
        self.arcs[0].start
    }

    /// The three zeros, zero `i` being the start of arc `i`.
    pub fn zeros(&self) -> [f64; 3] {
        [self.arcs[0].start, self.arcs[1].start, self.arcs[2].start]
    }

    pub fn profile(&self, i: usize, theta: f64) -> f64 {
        self.arcs[i].eval(theta)
    }

    /// `Σ γᵢ(θ)`.
    pub fn modulus(&self, theta: f64) -> f64 {
        (0..3).map(|i| self.profile(i, theta)).sum()
    }

    /// `Σ σᵢ γᵢ(θ)`, the cover trace on the sheet starting at the seam.
    pub fn signed(&self, theta: f64) -> f64 {
        (0..3).map(|i| self.signs[i] as f64 * self.profile(i, theta)).sum()
    }

    /// Sup of the modulus on a fine sample; the natural amplitude unit.
    pub fn scale(&self) -> f64 {
        (0..4096).map(|k| self.modulus(TAU * k as f64 / 4096.0)).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for arc in &mut out.arcs {
            arc.shape = match &arc.shape {
                Shape::Bump { amp, power, tilt } => Shape::Bump { amp: amp * c, power: *power, tilt: *tilt },
                Shape::Table(v) => Shape::Table(v.iter().map(|x| x * c).collect()),
            };
        }
        out
    }

    /// Adds `eps` to the amplitude of arc `arc` (bump shapes) or `eps·sin(πt)` (tables).
    pub fn perturbed(&self, arc: usize, eps: f64) -> Self {
        let mut out = self.clone();
        let a = &mut out.arcs[arc];
        a.shape = match &a.shape {
            Shape::Bump { amp, power, tilt } => Shape::Bump { amp: amp + eps, power: *power, tilt: *tilt },
            Shape::Table(v) => {
                let n = v.len() - 1;
                Shape::Table(
                    v.iter().enumerate().map(|(k, x)| x + eps * (PI * k as f64 / n as f64).sin()).collect(),
                )
            }
        };
        out
    }

    /// Sup-norm distance between the complex traces of two data sets.
    pub fn distance(&self, other: &Self) -> f64 {
        (0..4096)
            .map(|k| {
                let t = TAU * k as f64 / 4096.0;
                (self.complex_trace(t) - other.complex_trace(t)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Physical complex trace `Γ(θ) = e^{i(2n+1)(θ−θ_seam)/2} Σσᵢγᵢ(θ)` with `θ` reduced past the seam.
    pub fn complex_trace(&self, theta: f64) -> Complex64 {
        let d = (theta - self.seam()).rem_euclid(TAU);
        Complex64::from_polar(1.0, 0.5 * self.winding as f64 * d) * self.signed(theta)
    }

    /// Cover trace at a boundary point of the reference chart (`|y| = 1`).
    pub fn cover_value(&self, a: PolePosition, y: Complex64) -> f64 {
        let x = reference_to_physical(a, y);
        let theta = x.im.atan2(x.re);
        let d = (theta - self.seam()).rem_euclid(TAU);
        let theta = self.seam() + d;
        let sheet = sheet_root(a, theta);
        let y1 = chart_map(a, y);
        let s = if (y1 * sheet.conj()).re >= 0.0 { 1.0 } else { -1.0 };
        s * self.signed(theta)
    }

    /// Boundary data for a reference-chart grid with `n_t` angles.
    ///
    /// Each value is the mean over the cell `[φₘ − Δφ/2, φₘ + Δφ/2]`, split at the lifts of the
    /// zeros where the trace may have a corner. Point samples would make the discrete data, and
    /// every energy built on it, non-differentiable in `a` whenever a corner crosses a node.
    pub fn cover_boundary(&self, a: PolePosition, n_t: usize) -> Vec<f64> {
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let dphi = TAU / n_t as f64;
        let mut corners: Vec<f64> = self
            .zeros()
            .iter()
            .flat_map(|&z| {
                let half = 0.5 * moebius_inverse(a, Complex64::from_polar(1.0, z)).arg();
                [half, half + PI].map(|t| t.rem_euclid(TAU))
            })
            .collect();
        corners.sort_by(f64::total_cmp);
        let value = |phi: f64| self.cover_value(a, Complex64::from_polar(1.0, phi));
        (0..n_t)
            .map(|m| {
                let lo = (m as f64 - 0.5) * dphi;
                let hi = lo + dphi;
                let mut cuts = vec![lo];
                for &c in &corners {
                    // Corners are in [0, 2π); the first cell straddles 0.
                    for c in [c, c - TAU] {
                        if c > lo && c < hi {
                            cuts.push(c);
                        }
                    }
                }
                cuts.sort_by(f64::total_cmp);
                cuts.push(hi);
                let integral: f64 = cuts
                    .windows(2)
                    .map(|w| {
                        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                        half * NODES.iter().zip(WEIGHTS).map(|(x, wt)| wt * value(mid + half * x)).sum::<f64>()
                    })
                    .sum();
                integral / dphi
            })
            .collect()
    }

    /// Physical boundary data of arc `i` on `n_t` uniform angles.
    pub fn arc_samples(&self, i: usize, n_t: usize) -> Vec<f64> {
        (0..n_t).map(|m| self.profile(i, TAU * m as f64 / n_t as f64)).collect()
    }

    /// Sample table `(θ, γ₁, γ₂, γ₃, σ₁, σ₂, σ₃)` with a header row.
    pub fn to_table(&self, samples: usize) -> String {
        let mut out = String::from("theta gamma1 gamma2 gamma3 sigma1 sigma2 sigma3\n");
        for k in 0..samples {
            let t = TAU * k as f64 / samples as f64;
            let _ = writeln!(
                out,
                "{:.17e} {:.17e} {:.17e} {:.17e} {} {} {}",
                t,
                self.profile(0, t),
                self.profile(1, t),
                self.profile(2, t),
                self.signs[0],
                self.signs[1],
                self.signs[2]
            );
        }
        out
    }
}

/// Root `y₊(θ) = √|e^{iθ} − a| e^{iα(θ)/2}` with `α` continuous in `θ`,
/// so that `y₊(θ + 2π) = −y₊(θ)`.
pub fn sheet_root(a: PolePosition, theta: f64) -> Complex64 {
    let e = Complex64::from_polar(1.0, theta);
    let alpha = theta + (1.0 - a.z() * e.conj()).arg();
    Complex64::from_polar((e - a.z()).norm().sqrt(), 0.5 * alpha)
}

/// Raw sampled trace as read from a table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub theta: Vec<f64>,
    pub gamma: [Vec<f64>; 3],
    pub sigma: [Vec<f64>; 3],
}

impl RawTrace {
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| TraceError::Parse("empty input".into()))?;
        let cols: Vec<&str> = header.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let expected = ["theta", "gamma1", "gamma2", "gamma3", "sigma1", "sigma2", "sigma3"];
        if cols != expected {
            return Err(TraceError::Parse(format!("header must be `{}`", expected.join(" "))));
        }
        let mut raw = RawTrace { theta: vec![], gamma: Default::default(), sigma: Default::default() };
        for (ln, line) in lines.enumerate() {
            let v: Result<Vec<f64>, _> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse::<f64>).collect();
            let v = v.map_err(|e| TraceError::Parse(format!("row {}: {e}", ln + 2)))?;
            if v.len() != 7 {
                return Err(TraceError::Parse(format!("row {}: expected 7 columns, got {}", ln + 2, v.len())));
            }
            raw.theta.push(v[0]);
            for i in 0..3 {
                raw.gamma[i].push(v[1 + i]);
                raw.sigma[i].push(v[4 + i]);
            }
        }
        Ok(raw)
    }
}

/// Checks the class invariants on a sampled trace and builds tabulated arcs.
pub fn validate_trace(raw: &RawTrace) -> Result<BoundaryTrace, TraceError> {
    let n = raw.theta.len();
    if n < 64 {
        return Err(TraceError::TooFewSamples(n));
    }
    let dt = TAU / n as f64;
    for (k, &t) in raw.theta.iter().enumerate() {
        if (t - k as f64 * dt).abs() > 1e-9 {
            return Err(TraceError::Parse(format!("angles must be uniform on [0, 2π), row {} has {t}", k + 2)));
        }
    }
    let peak = raw.gamma.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let tiny = 1e-12 * peak.max(1e-300);
    let mut signs = [0i8; 3];
    for i in 0..3 {
        let s0 = raw.sigma[i][0];
        if (s0 != 1.0 && s0 != -1.0) || raw.sigma[i].iter().any(|&s| s != s0) {
            let bad = raw.sigma[i].iter().find(|&&s| s != s0).copied().unwrap_or(s0);
            return Err(TraceError::BadSign { arc: i + 1, value: bad });
        }
        signs[i] = s0 as i8;
        for (k, &g) in raw.gamma[i].iter().enumerate() {
            if g < -tiny {
                return Err(TraceError::NegativeProfile { arc: i + 1, theta: raw.theta[k], value: g });
            }
        }
    }
    for k in 0..n {
        let present: Vec<usize> = (0..3).filter(|&i| raw.gamma[i][k] > tiny).collect();
        if present.len() > 1 {
            return Err(TraceError::OverlappingSupports { theta: raw.theta[k], first: present[0] + 1, second: present[1] + 1 });
        }
    }
    // Zero runs of the total modulus; each run must be a single point (at most two samples).
    let zero: Vec<bool> = (0..n).map(|k| (0..3).map(|i| raw.gamma[i][k]).sum::<f64>() <= tiny).collect();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    if zero.iter().all(|&z| z) {
        return Err(TraceError::WrongZeroCount { count: 0 });
    }
    let first_nonzero = zero.iter().position(|&z| !z).expect("some sample is nonzero");
    let mut k = 0;
    while k < n {
        let idx = (first_nonzero + k) % n;
        if zero[idx] {
            let start = idx;
            let mut len = 0;
            while k < n && zero[(first_nonzero + k) % n] {
                len += 1;
                k += 1;
            }
            runs.push((start, len));
        } else {
            k += 1;
        }
    }
    // A sign change between samples with no zero sample also counts as a zero.
    let mut crossings = 0;
    for k in 0..n {
        let owner = |k: usize| (0..3).find(|&i| raw.gamma[i][k] > tiny);
        if let (Some(p), Some(q)) = (owner(k), owner((k + 1) % n)) {
            if p != q {
                crossings += 1;
            }
        }
    }
    let count = runs.len() + crossings;
    if count != 3 || runs.iter().any(|&(_, len)| len > 2) {
        return Err(TraceError::WrongZeroCount { count: if runs.iter().any(|&(_, l)| l > 2) { usize::MAX } else { count } });
    }
    // Build arcs: each γᵢ must be positive on exactly one cyclic run.
    let mut arcs = Vec::new();
    for i in 0..3 {
        let pos: Vec<bool> = raw.gamma[i].iter().map(|&g| g > tiny).collect();
        let starts: Vec<usize> = (0..n).filter(|&k| pos[k] && !pos[(k + n - 1) % n]).collect();
        if starts.len() != 1 {
            return Err(TraceError::BrokenSupport { arc: i + 1 });
        }
        let s = starts[0];
        let len = (0..n).take_while(|&d| pos[(s + d) % n]).count();
        // Support endpoints are the zero samples (or half-way points) bracketing the run.
        let before = (s + n - 1) % n;
        let after = (s + len) % n;
        let start = if zero[before] { raw.theta[before] } else { raw.theta[s] - 0.5 * dt };
        let end_gap = if zero[after] { dt } else { 0.5 * dt };
        let length = (len as f64 - 1.0) * dt + end_gap + (raw.theta[s] - start).rem_euclid(TAU);
        let mut samples = vec![0.0];
        for d in 0..len {
            samples.push(raw.gamma[i][(s + d) % n]);
        }
        samples.push(0.0);
        // Resample onto a uniform grid over [start, start + length].
        let times: Vec<f64> = std::iter::once(0.0)
            .chain((0..len).map(|d| ((raw.theta[s] - start).rem_euclid(TAU) + d as f64 * dt) / length))
            .chain(std::iter::once(1.0))
            .collect();
        let m = 4 * (len + 1);
        let table: Vec<f64> = (0..=m)
            .map(|q| {
                let t = q as f64 / m as f64;
                let p = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[p - 1], times[p]);
                let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                samples[p - 1] * (1.0 - w) + samples[p] * w
            })
            .collect();
        arcs.push(Arc { start: start.rem_euclid(TAU), length, shape: Shape::Table(table) });
    }
    let [a0, a1, a2]: [Arc; 3] = arcs.try_into().expect("three arcs");
    Ok(BoundaryTrace { arcs: [a0, a1, a2], signs, winding: 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from(tr: &BoundaryTrace, n: usize) -> RawTrace {
        RawTrace::parse(&tr.to_table(n)).unwrap()
    }

    #[test]
    fn symmetric_trace_is_valid() {
        let tr = BoundaryTrace::symmetric();
        let v = validate_trace(&table_from(&tr, 768)).unwrap();
        assert_eq!(v.signs(), [1, -1, 1]);
        for k in 0..300 {
            let t = TAU * k as f64 / 300.0 + 0.001;
            assert!((v.modulus(t) - tr.modulus(t)).abs() < 1e-3, "θ={t}");
        }
        for (z, w) in v.zeros().iter().zip(tr.zeros()) {
            assert!((z - w).abs() < 1e-9);
        }
        assert!((tr.scale() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_bumps_fail_zero_count() {
        let tr = BoundaryTrace::symmetric();
        let mut raw = table_from(&tr, 300);
        raw.gamma[2].iter_mut().for_each(|g| *g = 0.0);
        assert!(matches!(validate_trace(&raw), Err(TraceError::WrongZeroCount { .. })));
    }

    #[test]
    fn overlapping_bumps_rejected() {
        let tr = BoundaryTrace::symmetric();
        let mut raw = table_from(&tr, 300);
        for k in 0..300 {
            let t = raw.theta[k];
            raw.gamma[1][k] = if t > 1.5 && t < 4.5 { (PI * (t - 1.5) / 3.0).sin() } else { 0.0 };
        }
        assert!(matches!(validate_trace(&raw), Err(TraceError::OverlappingSupports { .. })));
    }

    #[test]
    fn negative_profile_rejected() {
        let mut raw = table_from(&BoundaryTrace::symmetric(), 300);
        raw.gamma[0][10] = -0.1;
        assert!(matches!(validate_trace(&raw), Err(TraceError::NegativeProfile { arc: 1, .. })));
        let short = RawTrace { theta: vec![0.0; 10], gamma: Default::default(), sigma: Default::default() };
        assert_eq!(validate_trace(&short), Err(TraceError::TooFewSamples(10)));
    }

    #[test]
    fn cover_trace_is_odd_and_matches_sheet() {
        let tr = BoundaryTrace::symmetric();
        let a = PolePosition::new(0.3, -0.2).unwrap();
        for m in 0..64 {
            let y = Complex64::from_polar(1.0, TAU * m as f64 / 64.0 + 0.01);
            let v = tr.cover_value(a, y);
            let w = tr.cover_value(a, -y);
            assert!((v + w).abs() < 1e-12);
            let x = reference_to_physical(a, y);
            assert!((v.abs() - tr.modulus(x.arg())).abs() < 1e-12);
        }
        // At a = 0 and the symmetric trace the cover data is sin 3φ.
        let o = PolePosition::origin();
        for m in 0..96 {
            let phi = TAU * m as f64 / 96.0;
            let v = tr.cover_value(o, Complex64::from_polar(1.0, phi));
            assert!((v - (3.0 * phi).sin()).abs() < 1e-12, "φ={phi} v={v}");
        }
    }

    #[test]
    fn complex_trace_is_continuous_at_seam() {
        let tr = BoundaryTrace::bumps(
            [0.4, 2.0, 4.1],
            [
                Shape::Bump { amp: 1.0, power: 1.0, tilt: 0.3 },
                Shape::Bump { amp: 0.7, power: 2.0, tilt: 0.0 },
                Shape::Bump { amp: 1.3, power: 1.5, tilt: -0.2 },
            ],
            [1, 1, -1],
        )
        .unwrap();
        let z = tr.seam();
        assert!((tr.complex_trace(z - 1e-9) - tr.complex_trace(z + 1e-9)).norm() < 1e-7);
        assert!((tr.complex_trace(1.0).norm() - tr.modulus(1.0)).abs() < 1e-14);
    }

    #[test]
    fn sheet_root_flips_after_a_loop() {
        let a = PolePosition::new(-0.4, 0.5).unwrap();
        for &t in &[0.0, 1.0, 2.5] {
            let r0 = sheet_root(a, t);
            let r1 = sheet_root(a, t + TAU);
            assert!((r0 + r1).norm() < 1e-12);
            let e = Complex64::from_polar(1.0, t);
            assert!((r0 * r0 - (e - a.z())).norm() < 1e-12);
        }
    }
}
