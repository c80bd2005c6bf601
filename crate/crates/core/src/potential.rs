//! Scalar potentials on the physical disk and their pull-backs to the cover charts.

use crate::geometry::{composite_weight, reference_to_physical, PolePosition};
use crate::grid::{PolarField, PolarGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("unrecognized potential spec `{0}` (expected const:c, radial:c0,c1,... or table:FILE)")]
    BadSpec(String),
    #[error("radial table needs at least two increasing radii starting at 0 and ending at 1: {0}")]
    BadTable(String),
}

/// Potential `V(x)` on the physical disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    Constant(f64),
    /// `Σ cₖ |x|^k`.
    RadialPolynomial(Vec<f64>),
    /// Piecewise-linear profile in `|x|`, radii increasing over `[0, 1]`.
    RadialTable { radii: Vec<f64>, values: Vec<f64> },
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Constant(0.0)
    }
}

impl Potential {
    pub fn parse(spec: &str) -> Result<Self, PotentialError> {
        let spec = spec.trim();
        let bad = || PotentialError::BadSpec(spec.to_string());
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "const" => rest.trim().parse().map(Potential::Constant).map_err(|_| bad()),
            "radial" => {
                let c: Result<Vec<f64>, _> = rest.split(',').map(|s| s.trim().parse::<f64>()).collect();
                c.ok().filter(|c| !c.is_empty()).map(Potential::RadialPolynomial).ok_or_else(bad)
            }
            "table" => {
                let text = std::fs::read_to_string(Path::new(rest.trim()))
                    .map_err(|e| PotentialError::BadTable(format!("{}: {e}", rest.trim())))?;
                Self::parse_table(&text)
            }
            _ => Err(bad()),
        }
    }

    /// Two whitespace or comma separated columns `r V`, `#` comments allowed.
    pub fn parse_table(text: &str) -> Result<Self, PotentialError> {
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let parsed: Option<Vec<f64>> = cols.iter().map(|s| s.parse().ok()).collect();
            match parsed.as_deref() {
                Some([r, v]) => {
                    radii.push(*r);
                    values.push(*v);
                }
                _ => return Err(PotentialError::BadTable(format!("bad row `{line}`"))),
            }
        }
        let ok = radii.len() >= 2
            && radii[0] == 0.0
            && (radii[radii.len() - 1] - 1.0).abs() < 1e-12
            && radii.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(PotentialError::BadTable(format!("{} rows", radii.len())));
        }
        Ok(Potential::RadialTable { radii, values })
    }

    /// Text form accepted by [`Potential::parse`] (tables are inlined as `radial-table`).
    pub fn spec(&self) -> String {
        match self {
            Potential::Constant(c) => format!("const:{c}"),
            Potential::RadialPolynomial(c) => {
                format!("radial:{}", c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            }
            Potential::RadialTable { radii, .. } => format!("table:<{} rows>", radii.len()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Constant(c) => *c == 0.0,
            Potential::RadialPolynomial(c) => c.iter().all(|&v| v == 0.0),
            Potential::RadialTable { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    pub fn eval(&self, x: Complex64) -> f64 {
        let r = x.norm();
        match self {
            Potential::Constant(c) => *c,
            Potential::RadialPolynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * r + ck),
            Potential::RadialTable { radii, values } => {
                let r = r.clamp(0.0, 1.0);
                let p = radii.partition_point(|&t| t <= r).clamp(1, radii.len() - 1);
                let (r0, r1) = (radii[p - 1], radii[p]);
                let w = (r - r0) / (r1 - r0);
                values[p - 1] * (1.0 - w) + values[p] * w
            }
        }
    }

    /// `V` sampled on a grid of the physical disk.
    pub fn physical_field(&self, grid: PolarGrid) -> PolarField {
        PolarField::from_fn(grid, |x| self.eval(x))
    }

    /// Pull-back to the reference chart of pole `a`: `4|y|²|T_a'(y²)|² V(T_a(y²))`.
    pub fn reference_field(&self, a: PolePosition, grid: PolarGrid) -> PolarField {
        if self.is_zero() {
            return PolarField::zeros(grid);
        }
        PolarField::from_fn(grid, |y| composite_weight(a, y) * self.eval(reference_to_physical(a, y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(Potential::parse("const:1.5").unwrap(), Potential::Constant(1.5));
        assert_eq!(Potential::parse("radial:1, 0, 2").unwrap(), Potential::RadialPolynomial(vec![1.0, 0.0, 2.0]));
        assert!(Potential::parse("cubic:3").is_err());
        assert!(Potential::parse("const:x").is_err());
        let p = Potential::parse(&Potential::Constant(-2.0).spec()).unwrap();
        assert_eq!(p, Potential::Constant(-2.0));
    }

    #[test]
    fn evaluation() {
        let p = Potential::RadialPolynomial(vec![1.0, 0.0, 2.0]);
        assert!((p.eval(Complex64::new(0.3, 0.4)) - 1.5).abs() < 1e-15);
        let t = Potential::parse_table("# r V\n0 1\n0.5 3\n1 0\n").unwrap();
        assert!((t.eval(Complex64::new(0.25, 0.0)) - 2.0).abs() < 1e-15);
        assert!((t.eval(Complex64::new(0.0, 0.75)) - 1.5).abs() < 1e-15);
        assert!(Potential::parse_table("0.1 1\n1 2\n").is_err());
    }

    #[test]
    fn pullback_vanishes_at_branch_point() {
        let g = PolarGrid::new(8, 16).unwrap();
        let a = PolePosition::new(0.2, 0.1).unwrap();
        let f = Potential::Constant(1.0).reference_field(a, g);
        assert!(f.values().iter().all(|&v| v >= 0.0));
        let y = g.point(3, 5);
        assert!((f.at(3, 5) - composite_weight(a, y)).abs() < 1e-15);
    }
}
