use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sphot::measure::{quasi_uniform_mesh, DiscreteMeasure};
use sphot::multimap::{classify_regions, extract_multimap};
use sphot::pipeline::{
    build_measure, diagnose, export_report, plane_rotation, run_pipeline, MeasureSpec,
    ReportFormat, RunConfig, RunReport, SolverKind,
};
use sphot::solver::{Coupling, DualPotentials};
use sphot::{mtw, Result};

#[derive(Parser)]
#[command(
    name = "sphot",
    version,
    about = "Optimal transport on the round sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a density on a quasi-uniform mesh and write the measure JSON.
    Gen(GenArgs),
    /// Generate both measures, solve, and run every diagnostic.
    Solve(SolveArgs),
    /// Extract and classify the multimap of a stored coupling.
    Extract(ExtractArgs),
    /// Run the diagnostics on stored measures and coupling.
    Diagnose(DiagnoseArgs),
    /// Check the structural conditions of the cost.
    Mtw(MtwArgs),
    /// Export the check table of a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    mesh: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform`, `cap:K`, `cap:K:M` or `band:K`.
    #[arg(long, default_value = "uniform")]
    density: String,
    #[arg(long, default_value_t = 0.0)]
    rotation: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Tolerances {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    merge_tol: Option<f64>,
    #[arg(long)]
    zero_tol: Option<f64>,
    #[arg(long, default_value_t = 200)]
    mtw_samples: usize,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    mesh: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform")]
    mu: String,
    #[arg(long, default_value = "uniform")]
    nu: String,
    /// `exact` or `entropic`.
    #[arg(long, default_value = "exact")]
    solver: String,
    #[arg(long, default_value_t = 0.01)]
    reg: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    entropic_tol: f64,
    /// Rotation of the target mesh in the plane of the first two axes.
    #[arg(long, default_value_t = 0.0)]
    nu_rotation: f64,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long)]
    coupling: PathBuf,
    #[arg(long)]
    merge_tol: Option<f64>,
    #[arg(long)]
    zero_tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long)]
    coupling: PathBuf,
    #[arg(long)]
    duals: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct MtwArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// `json` or `csv`.
    #[arg(long, default_value = "json")]
    format: String,
}

fn print_report(report: &RunReport) {
    println!("total cost {:.12e}", report.total_cost);
    for (k, v) in &report.summary {
        println!("{k} {v}");
    }
    for c in &report.checks {
        println!("{}", c.line());
    }
}

fn load_coupling(path: &PathBuf, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Coupling> {
    Coupling::read_csv(BufReader::new(File::open(path)?), mu, nu)
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Gen(a) => {
            let spec: MeasureSpec = a.density.parse()?;
            let mesh = quasi_uniform_mesh(a.n, a.mesh, a.seed)?
                .rotated(&plane_rotation(a.n + 1, a.rotation));
            build_measure(&spec, &mesh)?.save_json(&a.out)?;
            Ok(0)
        }
        Command::Solve(a) => {
            let cfg = RunConfig {
                n: a.n,
                mesh_count: a.mesh,
                seed: a.seed,
                solver: a.solver.parse()?,
                reg: a.reg,
                max_iter: a.max_iter,
                entropic_tol: a.entropic_tol,
                epsilon_suitable: a.tol.epsilon,
                merge_tol: a.tol.merge_tol,
                zero_tol: a.tol.zero_tol,
                nu_rotation: a.nu_rotation,
                mtw_samples: a.tol.mtw_samples,
                output_dir: a.tol.out,
            };
            let report = run_pipeline(&cfg, &a.mu, &a.nu)?;
            print_report(&report);
            Ok(report.exit_code())
        }
        Command::Extract(a) => {
            let mu = DiscreteMeasure::load_json(&a.mu)?;
            let nu = DiscreteMeasure::load_json(&a.nu)?;
            let coupling = load_coupling(&a.coupling, &mu, &nu)?;
            let merge_tol = a.merge_tol.unwrap_or(2.0 * nu.spacing());
            let mm = classify_regions(
                extract_multimap(&coupling, &mu, &nu, merge_tol)?,
                a.zero_tol.unwrap_or(mu.spacing()),
            );
            fs::write(&a.out, serde_json::to_string_pretty(&mm.to_json_records())?)?;
            let [s0, s1, s2] = mm.region_counts();
            println!("S0 {s0}\nS1 {s1}\nS2 {s2}");
            Ok(0)
        }
        Command::Diagnose(a) => {
            let mu = DiscreteMeasure::load_json(&a.mu)?;
            let nu = DiscreteMeasure::load_json(&a.nu)?;
            let coupling = load_coupling(&a.coupling, &mu, &nu)?;
            let duals: Option<DualPotentials> = match &a.duals {
                Some(p) => Some(serde_json::from_str(&fs::read_to_string(p)?)?),
                None => None,
            };
            let cfg = RunConfig {
                n: mu.n(),
                mesh_count: mu.len(),
                seed: a.seed,
                solver: SolverKind::Exact,
                epsilon_suitable: a.tol.epsilon,
                merge_tol: a.tol.merge_tol,
                zero_tol: a.tol.zero_tol,
                mtw_samples: a.tol.mtw_samples,
                output_dir: a.tol.out,
                ..RunConfig::default()
            };
            cfg.validate()?;
            let specs = (a.mu.display().to_string(), a.nu.display().to_string());
            let report = diagnose(
                &cfg,
                (&specs.0, &specs.1),
                &mu,
                &nu,
                &coupling,
                duals.as_ref(),
            )?;
            print_report(&report);
            Ok(report.exit_code())
        }
        Command::Mtw(a) => {
            let suite = mtw::run_suite(a.n, a.samples, a.seed)?;
            let mut lines = vec![
                ("twist", suite.twist.pass, suite.twist.min_margin),
                (
                    "nondegeneracy",
                    suite.nondegeneracy.pass,
                    suite.nondegeneracy.min_margin,
                ),
                (
                    "biconvexity (vertical)",
                    suite.biconvex_vertical.pass,
                    suite.biconvex_vertical.min_margin,
                ),
                (
                    "biconvexity (horizontal)",
                    suite.biconvex_horizontal.pass,
                    suite.biconvex_horizontal.min_margin,
                ),
            ];
            if let Some(cc) = &suite.cross_curvature {
                lines.push(("cross-curvature", cc.pass, cc.min_margin));
            }
            let mut ok = mtw::profile_strictly_decreasing(&suite.profile);
            for (name, pass, margin) in lines {
                println!(
                    "{} {name:<26} min_margin={margin:.6e}",
                    if pass { "PASS" } else { "FAIL" }
                );
                ok &= pass;
            }
            if let Some(out) = a.out {
                fs::write(out, serde_json::to_string_pretty(&suite)?)?;
            }
            Ok(if ok { 0 } else { 2 })
        }
        Command::Report(a) => {
            let format: ReportFormat = a.format.parse()?;
            let path = export_report(&a.run_dir, format)?;
            println!("{}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
