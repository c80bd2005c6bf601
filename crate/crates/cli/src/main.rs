use abnodal_core::geometry::PolePosition;
use abnodal_core::grid::GridLevel;
use abnodal_core::nodal::{classify_configuration, nodal_svg};
use abnodal_core::partition::{geometric_schedule, Competition, CompetitionOptions};
use abnodal_core::potential::Potential;
use abnodal_core::scenario::{builtin, builtin_scenarios, parse_pole, resolve_trace, run_scenario, write_atomic, Scenario};
use abnodal_core::spectrum::{eigen_landscape, extrapolation_pair, radial_points};
use abnodal_core::trace::{validate_trace, BoundaryTrace, RawTrace};
use abnodal_core::triple::{disk_scan_points, NewtonOptions, PoleProblem};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "abnodal", version, about = "Nodal sets, triple points and partitions for half-integer Aharonov-Bohm operators on the disk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Coarse,
    Default,
    Fine,
}

impl From<Grid> for GridLevel {
    fn from(g: Grid) -> Self {
        match g {
            Grid::Coarse => GridLevel::Coarse,
            Grid::Default => GridLevel::Default,
            Grid::Fine => GridLevel::Fine,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, value_enum, default_value = "default")]
    grid: Grid,
    /// Output directory for reports, tables and figures.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pole position `a1,a2`.
    #[arg(long, value_parser = pole_arg, allow_hyphen_values = true)]
    pole: Option<Complex64>,
    /// Trace table file, or `symmetric`, `perturbed:ARC:EPS`, `random:SEED`.
    #[arg(long, default_value = "symmetric")]
    trace: String,
    /// `const:C`, `radial:c0,c1,...` or `table:FILE`.
    #[arg(long, default_value = "const:0")]
    potential: String,
    #[arg(long, default_value_t = 1e5)]
    kappa_max: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or builtin scenario.
    Run {
        scenario: String,
        #[arg(long, value_enum, default_value = "default")]
        grid: Grid,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List builtin scenarios.
    List,
    /// Check a trace table.
    TraceValidate { file: PathBuf },
    /// Solve at one pole position and report the energy.
    Solve(Common),
    /// Leading coefficients at one pole position.
    Coeffs(Common),
    /// Newton search for the triple point.
    FindTriple(Common),
    /// Energy and gradient over a grid of pole positions.
    EnergyScan(Common),
    /// First eigenvalues along a radius of pole positions.
    EigScan(Common),
    /// Competition-diffusion sweep to the optimal partition.
    Partition(Common),
    /// Nodal set figure at one pole position.
    NodalSvg(Common),
}

fn pole_arg(s: &str) -> Result<Complex64, String> {
    parse_pole(s).ok_or_else(|| format!("expected `a1,a2`, got `{s}`"))
}

struct Setup {
    level: GridLevel,
    trace: BoundaryTrace,
    potential: Potential,
    pole: PolePosition,
    out: Option<PathBuf>,
}

impl Common {
    fn setup(&self) -> Result<Setup> {
        let spec = if Path::new(&self.trace).is_file() { format!("file:{}", self.trace) } else { self.trace.clone() };
        let trace = resolve_trace(&spec).with_context(|| format!("trace `{}`", self.trace))?;
        let potential = Potential::parse(&self.potential)?;
        let pole = PolePosition::from_complex(self.pole.unwrap_or_default())?;
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Setup { level: self.grid.into(), trace, potential, pole, out: self.out.clone() })
    }
}

impl Setup {
    fn problem(&self) -> PoleProblem {
        PoleProblem::new(self.trace.clone(), self.potential.clone(), self.level.grid())
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.out {
            write_atomic(&dir.join(name), contents)?;
        }
        Ok(())
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if Path::new(arg).is_file() {
        let text = std::fs::read_to_string(arg)?;
        Ok(Scenario::parse(&text).with_context(|| format!("scenario file `{arg}`"))?)
    } else {
        Ok(builtin(arg)?)
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::List => {
            for s in builtin_scenarios() {
                let stages: Vec<&str> = s.pipeline.iter().map(|p| p.name()).collect();
                println!("{:<28} {:<48} {}", s.id, stages.join(","), s.description);
            }
            Ok(true)
        }
        Command::Run { scenario, grid, out } => {
            let s = load_scenario(&scenario)?;
            let report = run_scenario(&s, grid.into(), out.as_deref())?;
            print!("{}", report.summary());
            println!(
                "{} {} on {} ({:.1} s, fingerprint {})",
                if report.passed { "PASS" } else { "FAIL" },
                report.scenario,
                report.grid,
                report.seconds,
                report.fingerprint
            );
            Ok(report.passed)
        }
        Command::TraceValidate { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| file.display().to_string())?;
            match RawTrace::parse(&text).and_then(|r| validate_trace(&r)) {
                Ok(t) => {
                    print_json(&json!({ "valid": true, "zeros": t.zeros(), "signs": t.signs(), "sign_changes": t.sign_changes() }))?;
                    Ok(true)
                }
                Err(e) => {
                    print_json(&json!({ "valid": false, "error": e.to_string() }))?;
                    Ok(false)
                }
            }
        }
        Command::Solve(c) => {
            let s = c.setup()?;
            let config = s.problem().solve(s.pole)?;
            let g = config.field.grid();
            let mut csv = String::from("j,m,rho,phi,value\n");
            for j in 0..g.n_r() {
                for m in 0..g.n_t() {
                    let _ = writeln!(csv, "{j},{m},{:.8},{:.8},{:.12e}", g.radius(j), g.angle(m), config.field.at(j, m));
                }
            }
            s.write("field.csv", &csv)?;
            let report = json!({
                "pole": [s.pole.z().re, s.pole.z().im],
                "grid": g.describe(),
                "energy": config.energy(),
                "sup_norm": config.field.sup_norm(),
            });
            s.write("solve.json", &serde_json::to_string_pretty(&report)?)?;
            print_json(&report)?;
            Ok(true)
        }
        Command::Coeffs(c) => {
            let s = c.setup()?;
            let pair = s.problem().coefficient_map(s.pole)?;
            let report = json!({ "pole": [s.pole.z().re, s.pole.z().im], "first": pair.first, "third": pair.third });
            s.write("coefficients.json", &serde_json::to_string_pretty(&report)?)?;
            print_json(&report)?;
            Ok(true)
        }
        Command::FindTriple(c) => {
            let s = c.setup()?;
            let p = s.problem();
            let r = p.find_triple_point(s.pole, &NewtonOptions::default())?;
            let a = PolePosition::from_complex(r.a_star)?;
            let g = p.energy_gradient_with_grid_error(a, 1e-3)?;
            s.write("newton.log", &r.log_lines())?;
            let report = json!({ "result": r, "gradient": g, "gradient_norm": g.norm() });
            s.write("triple.json", &serde_json::to_string_pretty(&report)?)?;
            print_json(&report)?;
            Ok(r.converged && g.norm() < 10.0 * g.floor())
        }
        Command::EnergyScan(c) => {
            let s = c.setup()?;
            let centre = s.pole.z();
            let points: Vec<Complex64> = disk_scan_points(0.6, 13).into_iter().map(|z| z + centre).filter(|z| z.norm() < 0.9).collect();
            let scan = s.problem().landscape_scan(&points, 1e-3, 0.05)?;
            s.write("energy_scan.csv", &scan.to_csv())?;
            print!("{}", scan.to_csv());
            let flagged: Vec<[f64; 2]> = scan.flagged().iter().map(|p| [p.a.re, p.a.im]).collect();
            eprintln!("flagged: {flagged:?}; minimizer ({:.4},{:.4})", scan.minimizer.re, scan.minimizer.im);
            Ok(true)
        }
        Command::EigScan(c) => {
            let s = c.setup()?;
            let l = eigen_landscape(&radial_points(0.15, 0.9), &extrapolation_pair(s.level), &s.potential, 2)?;
            s.write("eigen_landscape.csv", &l.to_csv())?;
            print!("{}", l.to_csv());
            Ok(l.above_disk())
        }
        Command::Partition(c) => {
            let s = c.setup()?;
            let comp = Competition::new(s.trace.clone(), s.potential.clone(), s.level.grid());
            let hi = c.kappa_max.log10().round() as i32;
            if hi < 1 {
                bail!("--kappa-max must be at least 10");
            }
            let sweep = comp.kappa_sweep(&geometric_schedule(1, hi), None, &CompetitionOptions::default())?;
            s.write("kappa_sweep.csv", &sweep.to_csv())?;
            s.write("partition.csv", &sweep.sharp.to_csv(0.0))?;
            s.write("partition.svg", &sweep.sharp.to_svg(0.0, 480.0))?;
            print!("{}", sweep.to_csv());
            println!(
                "segregated={} projected_energy={:.8} sharp_energy={:.8}",
                sweep.segregated,
                sweep.limit.energies.iter().sum::<f64>(),
                sweep.sharp.energies.iter().sum::<f64>()
            );
            Ok(sweep.segregated)
        }
        Command::NodalSvg(c) => {
            let s = c.setup()?;
            let config = s.problem().solve(s.pole)?;
            let cfg = classify_configuration(&config.field, s.pole, &s.trace, 1e-4 * s.trace.scale())?;
            let svg = nodal_svg(&cfg, s.pole, 480.0);
            s.write("nodal.svg", &svg)?;
            if s.out.is_none() {
                println!("{svg}");
            } else {
                print_json(&json!({ "arc_count": cfg.arc_count, "arcs_at_pole": cfg.arcs_at_pole, "leading_order": cfg.leading.order }))?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
