//! Generalized eigenproblem `(−Δ + W) u = λ w u` by shift-invert subspace
//! iteration with Rayleigh–Ritz projection.

use crate::elliptic::{dirichlet_energy, EllipticError, Operator, Sector};
use crate::grid::{PolarField, PolarGrid};
use crate::linalg::{dense_symmetric_eigen, LinalgError, SpdFactor, SpdMatrix};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EIGEN_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 2000;
const SEED: u64 = 0x5eed_ab01;

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub eigenfields: Vec<PolarField>,
    pub weight_id: String,
    pub sector: Sector,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl SpectrumResult {
    /// Groups indices into clusters whose consecutive relative gap is below `rel_gap`.
    pub fn clusters(&self, rel_gap: f64) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            match out.last_mut() {
                Some(c) if (l - self.eigenvalues[*c.last().unwrap()]).abs() <= rel_gap * l.abs() => c.push(i),
                _ => out.push(vec![i]),
            }
        }
        out
    }
}

/// Weighted inner product `Σ w f g dA` over the whole grid.
pub fn weighted_inner(f: &PolarField, g: &PolarField, weight: &PolarField) -> f64 {
    let grid = f.grid();
    let mut s = 0.0;
    for j in 0..grid.n_r() {
        let area = grid.cell_area(j);
        for m in 0..grid.n_t() {
            s += weight.at(j, m) * f.at(j, m) * g.at(j, m) * area;
        }
    }
    s
}

pub fn rayleigh_quotient(f: &PolarField, w: &PolarField, weight: &PolarField) -> f64 {
    dirichlet_energy(f, w) / weighted_inner(f, f, weight)
}

/// Lowest `count` eigenpairs in the requested sector. The shift starts at 1 and
/// falls back to a guaranteed lower bound when `A − σM` is not definite.
pub fn generalized_eigs(
    grid: PolarGrid,
    w: &PolarField,
    mass_weight: &PolarField,
    sector: Sector,
    count: usize,
) -> Result<SpectrumResult, EllipticError> {
    let op = Operator::assemble(grid, w, sector, None)?;
    let mass: Vec<f64> = op.nodes().iter().zip(op.areas()).map(|(&(j, m), &a)| mass_weight.at(j, m) * a).collect();
    let min_ratio = op
        .nodes()
        .iter()
        .filter(|&&(j, m)| mass_weight.at(j, m) > 0.0)
        .map(|&(j, m)| w.at(j, m) / mass_weight.at(j, m))
        .fold(f64::INFINITY, f64::min);
    let mut shifts = vec![1.0, 0.0];
    if min_ratio.is_finite() {
        shifts.push(min_ratio.min(0.0) - 1.0);
    }
    let mut last_err = EllipticError::NotCoercive;
    for &sigma in &shifts {
        let shifted = op.matrix().shifted(-sigma, &mass);
        match shifted.factor() {
            Ok(factor) => {
                let (vals, vecs, residuals, iterations) = subspace_iteration(op.matrix(), &factor, &mass, count)?;
                let scale = if sector == Sector::Odd { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                let zero_boundary = vec![0.0; grid.n_t()];
                let eigenfields = vecs
                    .iter()
                    .map(|x| {
                        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
                        op.scatter(&scaled, &zero_boundary)
                    })
                    .collect();
                return Ok(SpectrumResult {
                    eigenvalues: vals,
                    eigenfields,
                    weight_id: String::new(),
                    sector,
                    residuals,
                    iterations,
                });
            }
            Err(LinalgError::NotPositiveDefinite) => last_err = EllipticError::NotCoercive,
            Err(e) => return Err(e.into()),
        }
    }
    // Indefinite even at the safe shift: fall through with the last error.
    Err(last_err)
}

type Eigenpairs = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, usize);

fn subspace_iteration(a: &SpdMatrix, k: &SpdFactor, mass: &[f64], count: usize) -> Result<Eigenpairs, EllipticError> {
    let n = a.n();
    let p = (count + count.div_ceil(2).max(4)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut x = Mat::<f64>::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    m_orthonormalize(&mut x, mass)?;
    let mut theta = vec![0.0; p];
    let mut residuals = vec![f64::INFINITY; count];
    for it in 1..=MAX_ITERATIONS {
        let mut y = Mat::<f64>::from_fn(n, p, |i, c| mass[i] * x[(i, c)]);
        k.solve_block(y.as_mut());
        m_orthonormalize(&mut y, mass)?;
        let ay = mul_block(a, &y);
        let ar = Mat::<f64>::from_fn(p, p, |r, c| (0..n).map(|i| y[(i, r)] * ay[(i, c)]).sum::<f64>());
        let ar = Mat::<f64>::from_fn(p, p, |r, c| 0.5 * (ar[(r, c)] + ar[(c, r)]));
        let (vals, q) = dense_symmetric_eigen(&ar)?;
        x = &y * &q;
        let ax = &ay * &q;
        theta.copy_from_slice(&vals);
        let mut worst: f64 = 0.0;
        for c in 0..count {
            let mut r2 = 0.0;
            let mut m2 = 0.0;
            for i in 0..n {
                let mx = mass[i] * x[(i, c)];
                let r = ax[(i, c)] - theta[c] * mx;
                r2 += r * r;
                m2 += mx * mx;
            }
            residuals[c] = r2.sqrt() / (theta[c].abs().max(1e-300) * m2.sqrt());
            worst = worst.max(residuals[c]);
        }
        if worst < EIGEN_TOL {
            let vecs = (0..count).map(|c| (0..n).map(|i| x[(i, c)]).collect()).collect();
            return Ok((theta[..count].to_vec(), vecs, residuals, it));
        }
    }
    Err(EllipticError::EigenNoConvergence {
        iterations: MAX_ITERATIONS,
        residual: residuals.iter().cloned().fold(0.0, f64::max),
    })
}

fn mul_block(a: &SpdMatrix, x: &Mat<f64>) -> Mat<f64> {
    let n = x.nrows();
    let mut out = Mat::<f64>::zeros(n, x.ncols());
    for c in 0..x.ncols() {
        let col: Vec<f64> = (0..n).map(|i| x[(i, c)]).collect();
        let y = a.mul_vec(&col);
        for i in 0..n {
            out[(i, c)] = y[i];
        }
    }
    out
}

/// Cholesky-QR in the mass inner product, applied twice for stability.
fn m_orthonormalize(x: &mut Mat<f64>, mass: &[f64]) -> Result<(), EllipticError> {
    let n = x.nrows();
    let p = x.ncols();
    for _ in 0..2 {
        let g = Mat::<f64>::from_fn(p, p, |r, c| (0..n).map(|i| x[(i, r)] * mass[i] * x[(i, c)]).sum::<f64>());
        let (vals, q) = dense_symmetric_eigen(&g)?;
        // G = Q Λ Qᵀ, so X Q Λ^{-1/2} is M-orthonormal.
        let floor = vals.last().copied().unwrap_or(1.0) * 1e-28;
        let scaled = Mat::<f64>::from_fn(p, p, |r, c| q[(r, c)] / vals[c].max(floor).sqrt());
        *x = &*x * &scaled;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const J01: f64 = 2.404_825_557_695_773;

    #[test]
    fn disk_ground_state() {
        let g = PolarGrid::new(48, 96).unwrap();
        let zero = PolarField::zeros(g);
        let one = PolarField::from_fn(g, |_| 1.0);
        let s = generalized_eigs(g, &zero, &one, Sector::Full, 3).unwrap();
        assert!((s.eigenvalues[0] - J01 * J01).abs() < 0.01 * J01 * J01, "{:?}", s.eigenvalues);
        assert!((s.eigenvalues[1] - s.eigenvalues[2]).abs() < 1e-6 * s.eigenvalues[1]);
        for (i, f) in s.eigenfields.iter().enumerate() {
            let rq = rayleigh_quotient(f, &zero, &one);
            assert!((rq - s.eigenvalues[i]).abs() < 1e-8 * s.eigenvalues[i]);
            assert!((weighted_inner(f, f, &one) - 1.0).abs() < 1e-8);
        }
        assert!(weighted_inner(&s.eigenfields[0], &s.eigenfields[1], &one).abs() < 1e-8);
    }

    #[test]
    fn weight_scaling_scales_spectrum() {
        let g = PolarGrid::new(16, 32).unwrap();
        let zero = PolarField::zeros(g);
        let w = PolarField::from_fn(g, |y| 4.0 * y.norm_sqr());
        let s1 = generalized_eigs(g, &zero, &w, Sector::Odd, 3).unwrap();
        let s2 = generalized_eigs(g, &zero, &w.scale(2.5), Sector::Odd, 3).unwrap();
        for (a, b) in s1.eigenvalues.iter().zip(&s2.eigenvalues) {
            assert!((a / 2.5 - b).abs() < 1e-8 * b);
        }
    }

    #[test]
    fn odd_eigenfields_are_odd_and_normalized() {
        let g = PolarGrid::new(16, 32).unwrap();
        let zero = PolarField::zeros(g);
        let w = PolarField::from_fn(g, |y| 4.0 * y.norm_sqr());
        let s = generalized_eigs(g, &zero, &w, Sector::Odd, 2).unwrap();
        for (i, f) in s.eigenfields.iter().enumerate() {
            assert!(crate::elliptic::project_odd(f).max_abs_diff(f) < 1e-15);
            assert!((weighted_inner(f, f, &w) - 1.0).abs() < 1e-8);
            assert!((rayleigh_quotient(f, &zero, &w) - s.eigenvalues[i]).abs() < 1e-8 * s.eigenvalues[i]);
        }
    }

    #[test]
    fn clusters_group_by_gap() {
        let s = SpectrumResult {
            eigenvalues: vec![1.0, 1.0005, 2.0, 3.0, 3.001],
            eigenfields: vec![],
            weight_id: String::new(),
            sector: Sector::Full,
            residuals: vec![],
            iterations: 0,
        };
        assert_eq!(s.clusters(1e-3), vec![vec![0, 1], vec![2], vec![3, 4]]);
    }
}
