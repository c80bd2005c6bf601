//! Segregated three-component partitions through the competition–diffusion system
//! `−Δuᵢ + V uᵢ = −κ uᵢ Σ_{j≠i} uⱼ` and its large-κ limit.

use crate::elliptic::{apply_operator, dirichlet_energy, pinned_energy, EllipticError, Operator, Sector};
use crate::grid::{PolarField, PolarGrid};
use crate::nodal::NodalConfiguration;
use crate::potential::Potential;
use crate::trace::BoundaryTrace;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error("outer iteration stalled after {iterations} sweeps (change {change:.3e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("segregation defect stagnates at {defect:.3e} (κ = {kappa:e})")]
    NoSegregation { kappa: f64, defect: f64 },
    #[error("triple is not segregated (defect {defect:.3e} > {tol:.3e})")]
    NotSegregated { defect: f64, tol: f64 },
    #[error("κ schedule must be positive and increasing")]
    BadSchedule,
}

/// Three nonnegative components on the physical disk.
#[derive(Debug, Clone)]
pub struct PartitionTriple {
    pub components: [PolarField; 3],
    /// `None` marks the segregated limit.
    pub kappa: Option<f64>,
    pub segregation_defect: f64,
    pub energies: [f64; 3],
    pub outer_iterations: usize,
}

impl PartitionTriple {
    fn new(components: [PolarField; 3], v: &PolarField, kappa: Option<f64>, outer_iterations: usize) -> Self {
        let segregation_defect = segregation_defect(&components);
        let energies = [0, 1, 2].map(|i| dirichlet_energy(&components[i], v));
        Self { components, kappa, segregation_defect, energies, outer_iterations }
    }

    pub fn grid(&self) -> PolarGrid {
        self.components[0].grid()
    }

    /// Segregated representatives `(uᵢ − Σ_{j≠i} uⱼ)⁺`.
    pub fn projections(&self) -> [PolarField; 3] {
        let [a, b, c] = &self.components;
        [
            a.zip_with(&b.zip_with(c, |x, y| x + y), |x, s| (x - s).max(0.0)),
            b.zip_with(&a.zip_with(c, |x, y| x + y), |x, s| (x - s).max(0.0)),
            c.zip_with(&a.zip_with(b, |x, y| x + y), |x, s| (x - s).max(0.0)),
        ]
    }

    /// Segregated limit tag with projected components.
    pub fn into_limit(self, v: &PolarField) -> Self {
        let p = self.projections();
        Self::new(p, v, None, self.outer_iterations)
    }

    /// Region label per node: index of the dominant component, `None` where all vanish.
    pub fn labels(&self, threshold: f64) -> Vec<Option<usize>> {
        let g = self.grid();
        (0..g.len())
            .map(|k| {
                let vals = [0, 1, 2].map(|i| self.components[i].values()[k]);
                let (i, &m) = vals.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).expect("three");
                (m > threshold).then_some(i)
            })
            .collect()
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        (0..3).map(|i| self.components[i].max_abs_diff(&other.components[i])).fold(0.0, f64::max)
    }

    /// CSV with columns `y1, y2, u1, u2, u3, region_id` (`-1` outside every support).
    pub fn to_csv(&self, threshold: f64) -> String {
        let g = self.grid();
        let labels = self.labels(threshold);
        let mut out = String::from("y1,y2,u1,u2,u3,region_id\n");
        for j in 0..g.n_r() {
            for m in 0..g.n_t() {
                let k = g.index(j, m);
                let p = g.point(j, m);
                let _ = writeln!(
                    out,
                    "{:.6},{:.6},{:.10e},{:.10e},{:.10e},{}",
                    p.re,
                    p.im,
                    self.components[0].values()[k],
                    self.components[1].values()[k],
                    self.components[2].values()[k],
                    labels[k].map_or(-1, |l| l as i64)
                );
            }
        }
        out
    }

    /// Three shaded regions and their interfaces.
    pub fn to_svg(&self, threshold: f64, size: f64) -> String {
        let g = self.grid();
        let labels = self.labels(threshold);
        let colors = ["#d95f02", "#1b9e77", "#7570b3"];
        let map = |z: Complex64| ((1.0 + z.re) * 0.5 * size, (1.0 - z.im) * 0.5 * size);
        let mut out = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
        out.push('\n');
        let rings = g.n_r();
        for j in 0..rings {
            let (r0, r1) = (if j == 0 { 0.0 } else { 0.5 * (g.radius(j - 1) + g.radius(j)) }, if j + 1 == rings { 1.0 } else { 0.5 * (g.radius(j) + g.radius(j + 1)) });
            for m in 0..g.n_t() {
                let Some(l) = labels[g.index(j, m)] else { continue };
                let (t0, t1) = (g.angle(m) - 0.5 * g.dphi(), g.angle(m) + 0.5 * g.dphi());
                let pts = [Complex64::from_polar(r0, t0), Complex64::from_polar(r1, t0), Complex64::from_polar(r1, t1), Complex64::from_polar(r0, t1)];
                let path: Vec<String> = pts.iter().map(|&p| map(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(out, r#"<polygon points="{}" fill="{}" stroke="none"/>"#, path.join(" "), colors[l]);
            }
        }
        for (a, b) in interface_edges(&g, &labels) {
            let (x1, y1) = map(a);
            let (x2, y2) = map(b);
            let _ = writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="1"/>"#);
        }
        let (cx, cy) = map(Complex64::new(0.0, 0.0));
        let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="black"/>"#, 0.5 * size);
        out.push_str("</svg>\n");
        out
    }
}

/// `max_{i≠j} ∫ uᵢ uⱼ`.
pub fn segregation_defect(u: &[PolarField; 3]) -> f64 {
    let g = u[0].grid();
    let mut worst: f64 = 0.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let mut s = 0.0;
        for jr in 0..g.n_r() {
            let area = g.cell_area(jr);
            for m in 0..g.n_t() {
                s += u[i].at(jr, m) * u[j].at(jr, m) * area;
            }
        }
        worst = worst.max(s);
    }
    worst
}

/// Boundary data of component `i` on the physical grid.
pub fn component_boundary(trace: &BoundaryTrace, grid: PolarGrid, i: usize) -> Vec<f64> {
    (0..grid.n_t()).map(|m| trace.profile(i, grid.angle(m))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitionOptions {
    /// Relative sup-norm change that stops the outer iteration.
    pub tol: f64,
    pub max_outer: usize,
}

impl Default for CompetitionOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_outer: 5000 }
    }
}

/// Competition system for one trace and potential on a physical-disk grid.
#[derive(Debug, Clone)]
pub struct Competition {
    pub trace: BoundaryTrace,
    pub potential: Potential,
    pub grid: PolarGrid,
    v: PolarField,
    boundaries: [Vec<f64>; 3],
    scale: f64,
}

impl Competition {
    pub fn new(trace: BoundaryTrace, potential: Potential, grid: PolarGrid) -> Self {
        let v = potential.physical_field(grid);
        let boundaries = [0, 1, 2].map(|i| component_boundary(&trace, grid, i));
        let scale = trace.scale();
        Self { trace, potential, grid, v, boundaries, scale }
    }

    pub fn potential_field(&self) -> &PolarField {
        &self.v
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Default segregation tolerance `1e-5·scale²`.
    pub fn seg_tol(&self) -> f64 {
        1e-5 * self.scale * self.scale
    }

    fn solve_component(&self, i: usize, others: [&PolarField; 2], kappa: f64) -> Result<PolarField, EllipticError> {
        let w = if kappa == 0.0 {
            self.v.clone()
        } else {
            let s = others[0].zip_with(others[1], |a, b| a + b);
            self.v.zip_with(&s, |v, s| v + kappa * s)
        };
        let op = Operator::assemble(self.grid, &w, Sector::Full, None)?;
        Ok(op.solve(&self.boundaries[i], None)?.map(|x| x.max(0.0)))
    }

    /// Decoupled solves (`κ = 0`).
    pub fn decoupled(&self) -> Result<PartitionTriple, PartitionError> {
        let zero = PolarField::zeros(self.grid);
        let comps: Result<Vec<PolarField>, EllipticError> =
            (0..3).into_par_iter().map(|i| self.solve_component(i, [&zero, &zero], 0.0)).collect();
        let comps: [PolarField; 3] = comps?.try_into().expect("three components");
        Ok(PartitionTriple::new(comps, &self.v, Some(0.0), 1))
    }

    /// Positive random interior values with the exact boundary data.
    pub fn random_start(&self, seed: u64) -> PartitionTriple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = [0, 1, 2].map(|i| {
            let values: Vec<f64> = (0..self.grid.len()).map(|_| rng.random::<f64>() * self.scale).collect();
            PolarField::from_parts(self.grid, values, self.boundaries[i].clone()).expect("grid shape")
        });
        PartitionTriple::new(comps, &self.v, None, 0)
    }

    /// Cyclic Gauss–Seidel on the linearized equations with clipping at zero.
    pub fn solve_competition(
        &self,
        kappa: f64,
        warm_start: Option<&PartitionTriple>,
        opts: &CompetitionOptions,
    ) -> Result<PartitionTriple, PartitionError> {
        if kappa == 0.0 {
            return self.decoupled();
        }
        let mut u: [PolarField; 3] = match warm_start {
            Some(p) => p.components.clone(),
            None => self.decoupled()?.components,
        };
        for i in 0..3 {
            u[i].boundary_mut().copy_from_slice(&self.boundaries[i]);
        }
        let tol = opts.tol * self.scale;
        let mut change = f64::INFINITY;
        for it in 1..=opts.max_outer {
            change = 0.0;
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                let next = self.solve_component(i, [&u[j], &u[k]], kappa)?;
                change = f64::max(change, next.max_abs_diff(&u[i]));
                u[i] = next;
            }
            if change < tol {
                return Ok(PartitionTriple::new(u, &self.v, Some(kappa), it));
            }
        }
        Err(PartitionError::NoConvergence { iterations: opts.max_outer, change })
    }

    /// Warm-started continuation along an increasing κ schedule.
    pub fn kappa_sweep(&self, schedule: &[f64], start: Option<&PartitionTriple>, opts: &CompetitionOptions) -> Result<KappaSweep, PartitionError> {
        if schedule.is_empty() || schedule.iter().any(|&k| k <= 0.0) || schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PartitionError::BadSchedule);
        }
        let mut levels = Vec::new();
        let mut prev: Option<PartitionTriple> = start.cloned();
        for &kappa in schedule {
            let p = self.solve_competition(kappa, prev.as_ref(), opts)?;
            let limit_energy = self.projected_energy(&p);
            let cauchy = prev.as_ref().filter(|q| q.kappa.is_some()).map(|q| q.sup_distance(&p));
            if let Some(last) = levels.last().map(|l: &KappaLevel| l.defect) {
                if p.segregation_defect >= last && p.segregation_defect > self.seg_tol() {
                    return Err(PartitionError::NoSegregation { kappa, defect: p.segregation_defect });
                }
            }
            levels.push(KappaLevel {
                kappa,
                defect: p.segregation_defect,
                energy: p.energies.iter().sum(),
                projected_energy: limit_energy,
                cauchy,
                outer_iterations: p.outer_iterations,
            });
            prev = Some(p);
        }
        let last = prev.expect("nonempty schedule");
        let final_defect = last.segregation_defect;
        let cauchy_last = levels.last().and_then(|l| l.cauchy);
        let limit = last.clone().into_limit(&self.v);
        let sharp = self.sharpen(&limit)?;
        Ok(KappaSweep {
            levels,
            segregated: final_defect < self.seg_tol(),
            cauchy_converged: cauchy_last.is_some_and(|c| c < 1e-4 * self.scale),
            seg_tol: self.seg_tol(),
            final_kappa: last,
            limit,
            sharp,
        })
    }

    /// `Σᵢ ∫(|∇wᵢ|² + V wᵢ²)` over the segregated projections.
    pub fn projected_energy(&self, p: &PartitionTriple) -> f64 {
        p.projections().iter().map(|w| dirichlet_energy(w, &self.v)).sum()
    }

    /// Partition energy of a segregated triple.
    pub fn partition_energy(&self, p: &PartitionTriple) -> Result<f64, PartitionError> {
        self.require_segregated(p)?;
        Ok(p.energies.iter().sum())
    }

    fn require_segregated(&self, p: &PartitionTriple) -> Result<(), PartitionError> {
        let tol = self.seg_tol();
        if p.segregation_defect > tol {
            return Err(PartitionError::NotSegregated { defect: p.segregation_defect, tol });
        }
        Ok(())
    }

    /// Sub- and supersolution residuals of a segregated triple away from its interface
    /// cells, and the point of multiplicity three. Interface cells are the nodes where
    /// two or more components of `raw` are present, widened by `band` nodes; `raw` is
    /// the κ-solution `p` was projected from, or `p` itself.
    pub fn s_gamma_check(&self, p: &PartitionTriple, raw: &PartitionTriple, band: usize) -> Result<SGammaReport, PartitionError> {
        self.require_segregated(p)?;
        Ok(self.s_gamma_residuals(p, raw, band))
    }

    /// Same as [`Competition::s_gamma_check`] without the segregation precondition.
    pub fn s_gamma_residuals(&self, p: &PartitionTriple, raw: &PartitionTriple, band: usize) -> SGammaReport {
        let g = self.grid;
        let present = 1e-6 * self.scale;
        let multiple: Vec<bool> =
            (0..g.len()).map(|k| (0..3).filter(|&i| raw.components[i].values()[k] > present).count() >= 2).collect();
        let near = dilate(&g, multiple, band);
        let total = p.components[0].zip_with(&p.components[1], |a, b| a + b).zip_with(&p.components[2], |a, b| a + b);
        let mut sub: f64 = 0.0;
        let mut sup: f64 = 0.0;
        let mut sub_band: f64 = 0.0;
        let mut sup_band: f64 = 0.0;
        for i in 0..3 {
            let ui = &p.components[i];
            let hat = ui.zip_with(&total, |x, t| 2.0 * x - t);
            let lu = apply_operator(ui, &self.v);
            let lh = apply_operator(&hat, &self.v);
            for k in 0..g.len() {
                let (s, h) = (lu.values()[k].max(0.0), (-lh.values()[k]).max(0.0));
                if near[k] {
                    sub_band = sub_band.max(s);
                    sup_band = sup_band.max(h);
                } else {
                    sub = sub.max(s);
                    sup = sup.max(h);
                }
            }
        }
        let (cells, point) = triple_cells(&g, &raw.labels(0.0));
        let truncation = g.h() * g.h() * self.scale;
        SGammaReport {
            sub_residual: sub,
            super_residual: sup,
            interface_sub_residual: sub_band,
            interface_super_residual: sup_band,
            truncation_scale: truncation,
            triple_cells: cells.len(),
            triple_point_estimate: point,
            touches_boundary: cells.iter().any(|c| c.touches_boundary),
            cell_size: g.h(),
        }
    }

    /// Energy and interface comparison against the nodal partition of a solved configuration.
    pub fn compare_with_nodal(
        &self,
        p: &PartitionTriple,
        config: &NodalConfiguration,
        nodal_trace: &BoundaryTrace,
        nodal_energy: f64,
    ) -> NodalComparison {
        let consistent = self.trace.distance(nodal_trace) < 1e-12 * self.scale.max(1.0);
        let energy: f64 = p.energies.iter().sum();
        let labels = p.labels(0.0);
        let interface: Vec<Complex64> = interface_edges(&self.grid, &labels).into_iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let nodal: Vec<Complex64> = config.arcs.iter().flat_map(|c| c.points.iter().copied()).collect();
        let hausdorff = hausdorff(&interface, &nodal);
        NodalComparison {
            consistent,
            partition_energy: energy,
            nodal_energy,
            relative_energy_difference: (energy - nodal_energy).abs() / nodal_energy.abs().max(f64::MIN_POSITIVE),
            interface_distance: hausdorff,
            interface_distance_cells: hausdorff / self.grid.h(),
        }
    }

    /// Segregated triple whose regions are given by `region` (point → label).
    pub fn region_partition(&self, region: impl Fn(Complex64) -> usize) -> Result<PartitionTriple, PartitionError> {
        let g = self.grid;
        let owner: Vec<usize> = (0..g.n_r()).flat_map(|j| (0..g.n_t()).map(move |m| (j, m))).map(|(j, m)| region(g.point(j, m))).collect();
        self.owned_partition(&owner)
    }

    /// Re-solves each component on the region where it dominates, with zero values elsewhere.
    pub fn sharpen(&self, p: &PartitionTriple) -> Result<PartitionTriple, PartitionError> {
        let owner: Vec<usize> = p.labels(0.0).into_iter().map(|l| l.unwrap_or(3)).collect();
        self.owned_partition(&owner)
    }

    fn owned_partition(&self, owner: &[usize]) -> Result<PartitionTriple, PartitionError> {
        let g = self.grid;
        let solved: Result<Vec<(PolarField, f64)>, EllipticError> = (0..3)
            .into_par_iter()
            .map(|i| {
                let pinned: Vec<bool> = owner.iter().map(|&o| o != i).collect();
                let op = Operator::assemble(g, &self.v, Sector::Full, Some(&pinned))?;
                let u = op.solve(&self.boundaries[i], None)?;
                let e = pinned_energy(&u, &self.v, &pinned);
                Ok((u.map(|x| x.max(0.0)), e))
            })
            .collect();
        let (comps, energies): (Vec<PolarField>, Vec<f64>) = solved?.into_iter().unzip();
        let comps: [PolarField; 3] = comps.try_into().expect("three components");
        let mut p = PartitionTriple::new(comps, &self.v, None, 0);
        p.energies = energies.try_into().expect("three components");
        Ok(p)
    }

    /// Partition into regions bounded by curves from `junction` to the trace zeros.
    /// Each curve bends by `bend` radians at mid-length.
    pub fn sector_competitor(&self, junction: Complex64, bend: f64) -> Result<PartitionTriple, PartitionError> {
        let zeros = self.trace.zeros();
        let ends: Vec<Complex64> = zeros.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let reach: Vec<f64> = ends.iter().map(|e| (e - junction).norm()).collect();
        let base: Vec<f64> = ends.iter().map(|e| (e - junction).arg()).collect();
        let curve_angle = move |i: usize, r: f64| -> f64 {
            let s = (r / reach[i]).min(1.0);
            base[i] + bend * (std::f64::consts::PI * s).sin()
        };
        self.region_partition(move |x| {
            let d = x - junction;
            let (r, phi) = (d.norm(), d.arg());
            let a: Vec<f64> = (0..3).map(|i| curve_angle(i, r)).collect();
            (0..3)
                .find(|&i| (phi - a[i]).rem_euclid(TAU) < (a[(i + 1) % 3] - a[i]).rem_euclid(TAU))
                .unwrap_or(2)
        })
    }

    /// Default hand-built competitors: shifted junctions and bent interfaces.
    pub fn competitors(&self) -> Result<Vec<(String, f64)>, PartitionError> {
        let specs = [
            (Complex64::new(0.12, 0.06), 0.0),
            (Complex64::new(0.0, 0.0), 0.2),
            (Complex64::new(-0.08, 0.1), -0.15),
            (Complex64::new(0.05, -0.1), 0.1),
        ];
        specs
            .iter()
            .map(|&(p, b)| {
                let t = self.sector_competitor(p, b)?;
                let e: f64 = t.energies.iter().sum();
                Ok((format!("junction=({:.2},{:.2}) bend={b}", p.re, p.im), e))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaLevel {
    pub kappa: f64,
    pub defect: f64,
    /// `Σ ∫(|∇uᵢ|² + V uᵢ²)` of the κ-solution.
    pub energy: f64,
    /// Energy of the segregated projections.
    pub projected_energy: f64,
    /// Sup-norm change from the previous level.
    pub cauchy: Option<f64>,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct KappaSweep {
    pub levels: Vec<KappaLevel>,
    /// Solution at the largest κ.
    pub final_kappa: PartitionTriple,
    /// Projections of the final solution.
    pub limit: PartitionTriple,
    /// Components re-solved on the regions of `limit`.
    pub sharp: PartitionTriple,
    pub segregated: bool,
    pub cauchy_converged: bool,
    pub seg_tol: f64,
}

impl KappaSweep {
    pub fn defect_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].defect < w[0].defect)
    }

    /// Projected energies non-increasing up to `rel_tol`.
    pub fn energy_non_increasing(&self, rel_tol: f64) -> bool {
        self.levels.windows(2).all(|w| w[1].projected_energy <= w[0].projected_energy * (1.0 + rel_tol))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kappa,defect,energy,projected_energy,cauchy,outer_iterations\n");
        for l in &self.levels {
            let _ = writeln!(
                out,
                "{:e},{:.6e},{:.10e},{:.10e},{},{}",
                l.kappa,
                l.defect,
                l.energy,
                l.projected_energy,
                l.cauchy.map_or(String::new(), |c| format!("{c:.6e}")),
                l.outer_iterations
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SGammaReport {
    /// Largest positive part of `−Δuᵢ + V uᵢ` off the interface band.
    pub sub_residual: f64,
    /// Largest negative part of `−Δûᵢ + V ûᵢ` off the interface band.
    pub super_residual: f64,
    pub interface_sub_residual: f64,
    pub interface_super_residual: f64,
    /// `h² · scale`.
    pub truncation_scale: f64,
    pub triple_cells: usize,
    pub triple_point_estimate: Option<Complex64>,
    pub touches_boundary: bool,
    pub cell_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodalComparison {
    /// Both objects come from the same trace.
    pub consistent: bool,
    pub partition_energy: f64,
    pub nodal_energy: f64,
    pub relative_energy_difference: f64,
    pub interface_distance: f64,
    pub interface_distance_cells: f64,
}

/// Geometric κ schedule `10^lo … 10^hi`.
pub fn geometric_schedule(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

fn neighbours(g: &PolarGrid, j: usize, m: usize) -> Vec<(usize, usize)> {
    let n_t = g.n_t();
    let mut out = vec![(j, (m + 1) % n_t), (j, (m + n_t - 1) % n_t)];
    if j > 0 {
        out.push((j - 1, m));
    } else {
        out.push((0, (m + n_t / 2) % n_t));
    }
    if j + 1 < g.n_r() {
        out.push((j + 1, m));
    }
    out
}

/// Marks every node within `band` graph steps of a marked node.
fn dilate(g: &PolarGrid, mut mark: Vec<bool>, band: usize) -> Vec<bool> {
    for _ in 0..band {
        let prev = mark.clone();
        for j in 0..g.n_r() {
            for m in 0..g.n_t() {
                if neighbours(g, j, m).iter().any(|&(a, b)| prev[g.index(a, b)]) {
                    mark[g.index(j, m)] = true;
                }
            }
        }
    }
    mark
}

/// Edges between nodes of different labels, as physical segments.
fn interface_edges(g: &PolarGrid, labels: &[Option<usize>]) -> Vec<(Complex64, Complex64)> {
    let mut out = Vec::new();
    for j in 0..g.n_r() {
        for m in 0..g.n_t() {
            let l = labels[g.index(j, m)];
            let p = g.point(j, m);
            let mut push = |jj: usize, mm: usize| {
                if labels[g.index(jj, mm)] != l {
                    let q = g.point(jj, mm);
                    // Perpendicular bisector segment of the edge.
                    let mid = 0.5 * (p + q);
                    let d = (q - p) * Complex64::new(0.0, 0.5);
                    out.push((mid - d, mid + d));
                }
            };
            push(j, (m + 1) % g.n_t());
            if j + 1 < g.n_r() {
                push(j + 1, m);
            }
        }
    }
    out
}

struct TripleCell {
    centre: Complex64,
    touches_boundary: bool,
}

/// Cells whose corners carry three distinct labels; the innermost polygon counts as one cell.
fn triple_cells(g: &PolarGrid, labels: &[Option<usize>]) -> (Vec<TripleCell>, Option<Complex64>) {
    let mut cells = Vec::new();
    let distinct = |ls: &[Option<usize>]| {
        let mut seen = [false; 3];
        for l in ls.iter().flatten() {
            seen[*l] = true;
        }
        seen.iter().all(|&s| s)
    };
    let centre_labels: Vec<Option<usize>> = (0..g.n_t()).map(|m| labels[g.index(0, m)]).collect();
    if distinct(&centre_labels) {
        cells.push(TripleCell { centre: Complex64::new(0.0, 0.0), touches_boundary: false });
    }
    for j in 0..g.n_r().saturating_sub(1) {
        for m in 0..g.n_t() {
            let m1 = (m + 1) % g.n_t();
            let ls = [labels[g.index(j, m)], labels[g.index(j, m1)], labels[g.index(j + 1, m)], labels[g.index(j + 1, m1)]];
            if distinct(&ls) {
                let c = 0.25 * (g.point(j, m) + g.point(j, m1) + g.point(j + 1, m) + g.point(j + 1, m1));
                cells.push(TripleCell { centre: c, touches_boundary: j + 2 == g.n_r() });
            }
        }
    }
    let point = (!cells.is_empty()).then(|| cells.iter().map(|c| c.centre).sum::<Complex64>() / cells.len() as f64);
    (cells, point)
}

fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |p: &[Complex64], q: &[Complex64]| {
        p.par_iter().map(|x| q.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).reduce(|| 0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn competition(trace: BoundaryTrace) -> Competition {
        Competition::new(trace, Potential::Constant(0.0), PolarGrid::new(24, 48).unwrap())
    }

    #[test]
    fn decoupled_keeps_boundary_data() {
        let c = competition(BoundaryTrace::symmetric());
        let p = c.decoupled().unwrap();
        for i in 0..3 {
            assert_eq!(p.components[i].boundary(), component_boundary(&c.trace, c.grid, i).as_slice());
            assert!(p.components[i].values().iter().all(|&v| v >= 0.0));
        }
        assert!(p.segregation_defect > 1e-3);
    }

    #[test]
    fn zero_trace_has_zero_energy() {
        let c = competition(BoundaryTrace::symmetric().scaled(0.0));
        let p = c.decoupled().unwrap();
        assert_eq!(c.partition_energy(&p).unwrap(), 0.0);
    }

    #[test]
    fn energy_scales_quadratically() {
        let c1 = competition(BoundaryTrace::symmetric());
        let c2 = competition(BoundaryTrace::symmetric().scaled(2.0));
        let e1 = c1.sector_competitor(Complex64::new(0.0, 0.0), 0.0).unwrap();
        let e2 = c2.sector_competitor(Complex64::new(0.0, 0.0), 0.0).unwrap();
        let (s1, s2): (f64, f64) = (e1.energies.iter().sum(), e2.energies.iter().sum());
        assert!((s2 - 4.0 * s1).abs() < 1e-10 * s2);
        assert_eq!(e1.segregation_defect, 0.0);
    }

    #[test]
    fn sweep_reduces_defect() {
        let c = competition(BoundaryTrace::symmetric());
        let s = c.kappa_sweep(&geometric_schedule(1, 3), None, &CompetitionOptions::default()).unwrap();
        assert!(s.defect_decreasing());
        assert!(s.levels.iter().all(|l| l.outer_iterations > 0));
    }

    #[test]
    fn symmetric_junction_at_centre() {
        let c = competition(BoundaryTrace::symmetric());
        let s = c.sector_competitor(Complex64::new(0.0, 0.0), 0.0).unwrap();
        let r = c.s_gamma_residuals(&s, &s, 2);
        let p = r.triple_point_estimate.unwrap();
        assert!(p.norm() < c.grid.h(), "{p}");
    }
}
