//! Conformal maps between the physical disk, the double cover `y² = x − a`
//! and the reference disk used for all grid computations.
//!
//! Three coordinates appear throughout the crate:
//! * `x`: the physical disk, pole at `a`;
//! * `y₁` (pole chart): `y₁² = x − a`, the pole sits at `y₁ = 0`;
//! * `y₂` (reference chart): the unit disk, `x = T_a(y₂²)`.
//!
//! The pole chart and the reference chart are related by the explicit
//! holomorphic map [`chart_map`], so all cover-aware code can work in `y₂`
//! without crossing a branch cut.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pole {re}+{im}i is not strictly inside the unit disk")]
    PoleOutsideDisk { re: f64, im: f64 },
}

/// Location of the magnetic pole in the physical disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolePosition {
    pub re: f64,
    pub im: f64,
}

impl PolePosition {
    pub fn new(re: f64, im: f64) -> Result<Self, GeometryError> {
        if !(re.is_finite() && im.is_finite()) || re * re + im * im >= 1.0 {
            return Err(GeometryError::PoleOutsideDisk { re, im });
        }
        Ok(Self { re, im })
    }

    pub fn from_complex(a: Complex64) -> Result<Self, GeometryError> {
        Self::new(a.re, a.im)
    }

    pub fn origin() -> Self {
        Self { re: 0.0, im: 0.0 }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn norm(&self) -> f64 {
        self.z().norm()
    }
}

/// A point of the double cover, carrying both coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverPoint {
    pub x: Complex64,
    pub y: Complex64,
}

/// `T_a(x) = (x + a) / (ā x + 1)`, an automorphism of the closed disk with `T_a(0) = a`.
pub fn moebius_map(a: PolePosition, x: Complex64) -> Complex64 {
    let a = a.z();
    (x + a) / (a.conj() * x + 1.0)
}

pub fn moebius_inverse(a: PolePosition, x: Complex64) -> Complex64 {
    let a = a.z();
    (x - a) / (1.0 - a.conj() * x)
}

/// Derivative of `T_a` at `z`.
pub fn moebius_derivative(a: PolePosition, z: Complex64) -> Complex64 {
    let a = a.z();
    let d = a.conj() * z + 1.0;
    (1.0 - a.norm_sqr()) / (d * d)
}

/// `y ↦ (y² + a, y)`.
pub fn lift_to_cover(a: PolePosition, y: Complex64) -> CoverPoint {
    CoverPoint { x: y * y + a.z(), y }
}

pub fn cover_involution(p: CoverPoint) -> CoverPoint {
    CoverPoint { x: p.x, y: -p.y }
}

/// Jacobian factor of `y ↦ T_a(y²)`: `4|y|² |T_a'(y²)|²`.
pub fn composite_weight(a: PolePosition, y: Complex64) -> f64 {
    4.0 * y.norm_sqr() * moebius_derivative(a, y * y).norm_sqr()
}

/// Jacobian factor of `y ↦ y² + a` (pole chart).
pub fn pole_chart_weight(y: Complex64) -> f64 {
    4.0 * y.norm_sqr()
}

/// Physical point of a reference-chart coordinate.
pub fn reference_to_physical(a: PolePosition, y: Complex64) -> Complex64 {
    moebius_map(a, y * y)
}

/// Holomorphic map from the reference chart to the pole chart,
/// `y₁ = y₂ √(1 − |a|²) / √(1 + ā y₂²)`, so that `y₁² + a = T_a(y₂²)`.
pub fn chart_map(a: PolePosition, y: Complex64) -> Complex64 {
    let s = (1.0 - a.norm().powi(2)).sqrt();
    y * s / (1.0 + a.z().conj() * y * y).sqrt()
}

pub fn chart_map_derivative(a: PolePosition, y: Complex64) -> Complex64 {
    let s = (1.0 - a.norm().powi(2)).sqrt();
    let q = 1.0 + a.z().conj() * y * y;
    s / (q * q.sqrt())
}

/// Inverse of [`chart_map`].
pub fn chart_map_inverse(a: PolePosition, w: Complex64) -> Complex64 {
    let z = moebius_inverse(a, w * w + a.z());
    let y = z.sqrt();
    if (chart_map(a, y) - w).norm() <= (chart_map(a, -y) - w).norm() {
        y
    } else {
        -y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_disk_point(rng: &mut ChaCha8Rng, rmax: f64) -> Complex64 {
        let r = rmax * rng.random::<f64>().sqrt();
        let t = rng.random::<f64>() * std::f64::consts::TAU;
        Complex64::from_polar(r, t)
    }

    #[test]
    fn moebius_fixed_examples() {
        let x = c(0.3, 0.1);
        assert_eq!(moebius_map(PolePosition::origin(), x), x);
        let a = PolePosition::new(0.5, 0.0).unwrap();
        assert!((moebius_map(a, c(0.0, 0.0)) - c(0.5, 0.0)).norm() < 1e-15);
        let a = PolePosition::new(0.0, 0.4).unwrap();
        for k in 0..12 {
            let x = Complex64::from_polar(1.0, k as f64 * std::f64::consts::PI / 3.0);
            assert!((moebius_map(a, x).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn moebius_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = PolePosition::new(0.3, 0.2).unwrap();
        assert!((moebius_inverse(a, c(0.3, 0.2))).norm() < 1e-15);
        for _ in 0..1000 {
            let x = random_disk_point(&mut rng, 1.0);
            assert!((moebius_map(a, moebius_inverse(a, x)) - x).norm() < 1e-13);
        }
    }

    #[test]
    fn lift_and_involution() {
        let a = PolePosition::new(0.2, 0.0).unwrap();
        let p = lift_to_cover(a, c(0.0, 0.5));
        assert!((p.x - c(-0.05, 0.0)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let y = random_disk_point(&mut rng, 1.0);
            let p = lift_to_cover(a, y);
            let q = cover_involution(p);
            assert_eq!(p.x, lift_to_cover(a, -y).x);
            assert_eq!(q.x, p.x);
            assert_eq!(cover_involution(q), p);
        }
        let fixed = lift_to_cover(a, c(0.0, 0.0));
        assert_eq!(cover_involution(fixed), fixed);
    }

    #[test]
    fn weight_matches_fd_jacobian() {
        assert_eq!(composite_weight(PolePosition::new(0.3, -0.4).unwrap(), c(0.0, 0.0)), 0.0);
        let y = c(0.3, -0.6);
        assert!((composite_weight(PolePosition::origin(), y) - 4.0 * y.norm_sqr()).abs() < 1e-15);

        let a = PolePosition::new(0.5, 0.0).unwrap();
        let closed = 4.0 * 0.25 * (0.75 / (0.125f64 + 1.0).powi(2)).powi(2);
        assert!((composite_weight(a, c(0.5, 0.0)) - closed).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..200 {
            let a = PolePosition::from_complex(random_disk_point(&mut rng, 0.9)).unwrap();
            let y = random_disk_point(&mut rng, 0.98);
            if y.norm() < 0.05 {
                continue;
            }
            let f = |y: Complex64| reference_to_physical(a, y);
            let d = (f(y + h) - f(y - h)) / (2.0 * h);
            let w = composite_weight(a, y);
            assert!((d.norm_sqr() - w).abs() < 1e-5 * w, "a={:?} y={y}", a);
        }
    }

    #[test]
    fn chart_map_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let a = PolePosition::from_complex(random_disk_point(&mut rng, 0.9)).unwrap();
            let y = random_disk_point(&mut rng, 1.0);
            let w = chart_map(a, y);
            assert!((w * w + a.z() - reference_to_physical(a, y)).norm() < 1e-13);
            assert!((chart_map_inverse(a, w) - y).norm() < 1e-11);
            let h = 1e-6;
            let d = (chart_map(a, y + h) - chart_map(a, y - h)) / (2.0 * h);
            assert!((d - chart_map_derivative(a, y)).norm() < 1e-6 * d.norm().max(1.0));
        }
    }

    #[test]
    fn pole_outside_rejected() {
        assert!(PolePosition::new(1.0, 0.0).is_err());
        assert!(PolePosition::new(f64::NAN, 0.0).is_err());
    }
}
