//! End-to-end runs: build measures, solve, extract the multimap, run the
//! diagnostics and write every artifact plus a pass/fail table.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::measure::{
    check_suitable, default_epsilon, quasi_uniform_mesh, sample_density, Density, DiscreteMeasure,
    Mesh,
};
use crate::mtw::{profile_strictly_decreasing, run_suite, MtwSuite};
use crate::multimap::{
    classify_regions, extract_multimap, invert_maps, plus_image_regions, InverseMaps, MultiMap,
    Region, TargetRegion,
};
use crate::regularity::{
    beta_bound_excess, holder_exponent_bound, holder_fit, injectivity_lower_bound,
    monotonicity_check, plus_samples, region_constants, segment_normal_sweep, t_minus_bound_check,
    HolderReport, RegionConstants, ScaleWindow,
};
use crate::solver::{
    certify, cyclical_monotonicity_violation, solve_entropic, solve_exact, Coupling, DualPotentials,
};

/// Limit for the exact-solver invariants.
pub const INVARIANT_TOL: f64 = 1e-9;
/// S1 atoms with `|x·t⁺|` below this are left out of the Hölder fit.
pub const S1_FIT_FLOOR: f64 = 0.2;
/// Allowed slack on the Hölder exponent bound.
pub const EXPONENT_SLACK: f64 = 0.05;
/// Collinearity residual allowed per unit of jump length.
pub const RESIDUAL_PER_LAMBDA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Entropic,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "entropic" => Ok(SolverKind::Entropic),
            _ => Err(config(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub mesh_count: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub reg: f64,
    pub max_iter: usize,
    pub entropic_tol: f64,
    /// Defaults to `0.05 / |S^n|`.
    pub epsilon_suitable: Option<f64>,
    /// Defaults to twice the target mesh spacing.
    pub merge_tol: Option<f64>,
    /// Defaults to the source mesh spacing.
    pub zero_tol: Option<f64>,
    /// Rotation of the target mesh in the plane of the first two axes.
    pub nu_rotation: f64,
    /// Samples per structural-condition check; 0 skips them.
    pub mtw_samples: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2,
            mesh_count: 500,
            seed: 0,
            solver: SolverKind::Exact,
            reg: 0.01,
            max_iter: 20_000,
            entropic_tol: 1e-6,
            epsilon_suitable: None,
            merge_tol: None,
            zero_tol: None,
            nu_rotation: 0.0,
            mtw_samples: 200,
            output_dir: PathBuf::from("run"),
        }
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(config(format!("{name} must be positive"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config("sphere dimension must be >= 1"));
        }
        if self.mesh_count < self.n + 2 {
            return Err(config(format!(
                "mesh_count {} is below n + 2 = {}",
                self.mesh_count,
                self.n + 2
            )));
        }
        positive("reg", Some(self.reg))?;
        positive("entropic_tol", Some(self.entropic_tol))?;
        positive("epsilon_suitable", self.epsilon_suitable)?;
        positive("merge_tol", self.merge_tol)?;
        positive("zero_tol", self.zero_tol)?;
        if !self.nu_rotation.is_finite() {
            return Err(config("nu_rotation must be finite"));
        }
        if self.max_iter == 0 {
            return Err(config("max_iter must be positive"));
        }
        Ok(())
    }
}

/// A built-in density or a measure JSON file.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    Builtin(Density),
    File(PathBuf),
}

impl FromStr for MeasureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.ends_with(".json") {
            return Ok(MeasureSpec::File(PathBuf::from(s)));
        }
        s.parse().map(MeasureSpec::Builtin)
    }
}

/// Rotation by `theta` in the plane of the first two ambient axes.
pub fn plane_rotation(dim: usize, theta: f64) -> DMatrix<f64> {
    let mut q = DMatrix::identity(dim, dim);
    let (s, c) = theta.sin_cos();
    q[(0, 0)] = c;
    q[(0, 1)] = -s;
    q[(1, 0)] = s;
    q[(1, 1)] = c;
    q
}

pub fn build_measure(spec: &MeasureSpec, mesh: &Mesh) -> Result<DiscreteMeasure> {
    match spec {
        MeasureSpec::Builtin(d) => {
            let d = d.clone();
            sample_density(move |p| d.evaluate(p), mesh)
        }
        MeasureSpec::File(path) => {
            let m = DiscreteMeasure::load_json(path)?;
            if m.n() != mesh.n {
                return Err(config(format!(
                    "{} lives on S^{}, expected S^{}",
                    path.display(),
                    m.n(),
                    mesh.n
                )));
            }
            Ok(m)
        }
    }
}

pub fn prepare_measures(
    cfg: &RunConfig,
    mu: &MeasureSpec,
    nu: &MeasureSpec,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    cfg.validate()?;
    let mesh = quasi_uniform_mesh(cfg.n, cfg.mesh_count, cfg.seed)?;
    let target_mesh = mesh.rotated(&plane_rotation(cfg.n + 1, cfg.nu_rotation));
    Ok((build_measure(mu, &mesh)?, build_measure(nu, &target_mesh)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

/// One line of the report table. Hard checks are invariants of any optimal
/// plan; a hard failure makes the run exit with status 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub hard: bool,
    pub status: Status,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl Check {
    fn compare(name: &str, hard: bool, value: f64, limit: f64, upper: bool) -> Check {
        let ok = if upper {
            value <= limit
        } else {
            value >= limit
        };
        Check {
            name: name.into(),
            hard,
            status: if ok { Status::Pass } else { Status::Fail },
            value: value.is_finite().then_some(value),
            limit: Some(limit),
            detail: format!("{} {limit:e}", if upper { "<=" } else { ">=" }),
        }
    }

    pub fn at_most(name: &str, hard: bool, value: f64, limit: f64) -> Check {
        Check::compare(name, hard, value, limit, true)
    }

    pub fn at_least(name: &str, hard: bool, value: f64, limit: f64) -> Check {
        Check::compare(name, hard, value, limit, false)
    }

    pub fn flag(name: &str, hard: bool, ok: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            hard,
            status: if ok { Status::Pass } else { Status::Fail },
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }

    pub fn skip(name: &str, hard: bool, reason: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            hard,
            status: Status::Skip,
            value: None,
            limit: None,
            detail: reason.into(),
        }
    }

    pub fn line(&self) -> String {
        let value = self
            .value
            .map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        format!(
            "{} {:<4} {:<34} value={:<10} {}",
            self.status,
            if self.hard { "hard" } else { "soft" },
            self.name,
            value,
            self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub mu: String,
    pub nu: String,
    pub total_cost: f64,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn hard_failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.hard && c.status == Status::Fail)
            .collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.hard_failures().is_empty() {
            0
        } else {
            2
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let w = BufWriter::new(File::create(dir.join(name))?);
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

fn skip_reason(e: &Error) -> String {
    e.to_string()
}

/// Runs every diagnostic on a solved instance and writes the artifacts into
/// `cfg.output_dir`. `duals` enables the dual certificate checks.
pub fn diagnose(
    cfg: &RunConfig,
    specs: (&str, &str),
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    coupling: &Coupling,
    duals: Option<&DualPotentials>,
) -> Result<RunReport> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let exact = cfg.solver == SolverKind::Exact;
    let mut checks = Vec::new();
    let mut summary = BTreeMap::new();

    let eps = cfg
        .epsilon_suitable
        .unwrap_or_else(|| default_epsilon(cfg.n));
    let suit = check_suitable(mu, nu, eps, false)?;
    checks.push(Check::flag(
        "suitability bounds",
        false,
        suit.ok(),
        format!(
            "epsilon {eps:.3e}, {} atom(s) out of bounds",
            suit.worst_atoms.len()
        ),
    ));
    write_json(dir, "suitability.json", &suit)?;

    let marginal_limit = if exact {
        INVARIANT_TOL
    } else {
        cfg.entropic_tol
    };
    checks.push(Check::at_most(
        "marginal balance",
        true,
        coupling.marginal_violation(mu, nu),
        marginal_limit,
    ));
    summary.insert("total_cost".into(), coupling.total_cost);
    summary.insert("support_size".into(), coupling.len() as f64);

    if !exact {
        for name in [
            "dual feasibility",
            "duality gap",
            "cyclical monotonicity",
            "region partition",
        ] {
            checks.push(Check::skip(
                name,
                true,
                "entropic plans have diffuse support",
            ));
        }
        return finish(cfg, specs, coupling.total_cost, summary, checks);
    }

    match duals {
        Some(d) => {
            let cert = certify(coupling, d, mu, nu);
            checks.push(Check::at_most(
                "dual feasibility",
                true,
                cert.dual_infeasibility,
                INVARIANT_TOL,
            ));
            checks.push(Check::at_most(
                "complementary slackness",
                true,
                cert.slackness,
                INVARIANT_TOL,
            ));
            checks.push(Check::at_most(
                "duality gap",
                true,
                cert.duality_gap.abs(),
                INVARIANT_TOL,
            ));
        }
        None => checks.push(Check::skip(
            "duality gap",
            true,
            "no dual potentials supplied",
        )),
    }
    checks.push(Check::at_most(
        "cyclical monotonicity",
        true,
        cyclical_monotonicity_violation(coupling, mu, nu),
        INVARIANT_TOL,
    ));

    let merge_tol = cfg.merge_tol.unwrap_or(2.0 * nu.spacing());
    let zero_tol = cfg.zero_tol.unwrap_or(mu.spacing());
    let mm = match extract_multimap(coupling, mu, nu, merge_tol) {
        Ok(mm) => classify_regions(mm, zero_tol),
        Err(e @ Error::Extraction(_)) => {
            checks.push(Check::flag(
                "at most two images per atom",
                true,
                false,
                e.to_string(),
            ));
            return finish(cfg, specs, coupling.total_cost, summary, checks);
        }
        Err(e) => return Err(e),
    };
    checks.push(Check::flag(
        "at most two images per atom",
        true,
        true,
        format!("merge_tol {merge_tol:.3e}"),
    ));
    write_json(dir, "multimap.json", &mm.to_json_records())?;
    let inv = invert_maps(&mm, coupling, nu, zero_tol)?;

    let counts = mm.region_counts();
    let tcounts = inv.region_counts();
    for (k, (s, t)) in counts.iter().zip(&tcounts).enumerate() {
        summary.insert(format!("S{k}"), *s as f64);
        summary.insert(format!("T{k}"), *t as f64);
    }
    let labelled = mm.records.iter().all(|r| r.region.is_some());
    checks.push(Check::flag(
        "region partition",
        true,
        labelled
            && counts.iter().sum::<usize>() == mu.len()
            && tcounts.iter().sum::<usize>() == nu.len(),
        format!("S {counts:?}, T {tcounts:?}"),
    ));
    write_json(
        dir,
        "regions.json",
        &BTreeMap::from([
            (
                "source",
                counts
                    .iter()
                    .map(|&c| c as f64 / mu.len() as f64)
                    .collect::<Vec<_>>(),
            ),
            (
                "target",
                tcounts
                    .iter()
                    .map(|&c| c as f64 / nu.len() as f64)
                    .collect(),
            ),
        ]),
    )?;

    let max_lambda = mm.max_lambda();
    summary.insert("max_lambda".into(), max_lambda);
    checks.push(Check::at_most(
        "jump length at most 2",
        true,
        max_lambda,
        2.0 + INVARIANT_TOL,
    ));
    checks.push(Check::flag(
        "bivalent sign pattern",
        false,
        mm.anomalies.is_empty() && inv.anomalies.is_empty(),
        format!(
            "{} source and {} target anomalies",
            mm.anomalies.len(),
            inv.anomalies.len()
        ),
    ));
    write_json(dir, "anomalies.json", &(&mm.anomalies, &inv.anomalies))?;

    let s2 = mm.indices_in(Region::S2);
    if s2.is_empty() {
        checks.push(Check::skip(
            "bivalent collinearity",
            false,
            "no bivalent atoms",
        ));
        checks.push(Check::skip(
            "outer trace lands in T1",
            false,
            "no bivalent atoms",
        ));
    } else {
        let worst = s2
            .iter()
            .map(|&i| mm.records[i].collinearity_residual / mm.records[i].lambda)
            .fold(0.0, f64::max);
        checks.push(Check::at_most(
            "bivalent collinearity",
            false,
            worst,
            RESIDUAL_PER_LAMBDA,
        ));
        let pr = plus_image_regions(&mm, &inv, nu);
        checks.push(Check::flag(
            "outer trace lands in T1",
            false,
            pr.ok(),
            format!(
                "{} of {} nearest to a T2 atom",
                pr.nearest_in_t2.len(),
                pr.checked
            ),
        ));
    }

    target_checks(&inv, &mut checks)?;
    let window = ScaleWindow::for_spacing(mu.spacing());
    let holder = holder_checks(cfg.n, &mm, window, &mut checks);
    write_json(dir, "holder.json", &holder)?;
    let constants = constant_checks(&mm, &inv, &s2, window, &mut checks);
    write_json(dir, "constants.json", &constants)?;

    if cfg.mtw_samples > 0 {
        let suite = run_suite(cfg.n, cfg.mtw_samples, cfg.seed)?;
        mtw_checks(&suite, &mut checks);
        write_json(dir, "mtw.json", &suite)?;
    }
    finish(cfg, specs, coupling.total_cost, summary, checks)
}

fn target_checks(inv: &InverseMaps, checks: &mut Vec<Check>) -> Result<()> {
    let t2 = inv.indices_in(TargetRegion::T2);
    if t2.len() < 2 {
        checks.push(Check::skip(
            "inverse map monotonicity",
            true,
            "fewer than two T2 atoms",
        ));
        checks.push(Check::skip(
            "angle bound on T2 pairs",
            true,
            "fewer than two T2 atoms",
        ));
        return Ok(());
    }
    checks.push(Check::at_least(
        "inverse map monotonicity",
        true,
        monotonicity_check(inv, &t2)?,
        -INVARIANT_TOL,
    ));
    let (excess, _) = beta_bound_excess(inv)?;
    checks.push(Check::at_most(
        "angle bound on T2 pairs",
        true,
        excess,
        INVARIANT_TOL,
    ));
    Ok(())
}

fn holder_checks(
    n: usize,
    mm: &MultiMap,
    window: ScaleWindow,
    checks: &mut Vec<Check>,
) -> Vec<HolderReport> {
    let bound = holder_exponent_bound(n) - EXPONENT_SLACK;
    let mut reports = Vec::new();
    let sets = [
        (
            "S1",
            plus_samples(mm, |r| {
                r.region == Some(Region::S1) && r.x_dot_plus().abs() >= S1_FIT_FLOOR
            }),
        ),
        ("S2", plus_samples(mm, |r| r.region == Some(Region::S2))),
    ];
    for (label, samples) in sets {
        let name = format!("outer trace exponent on {label}");
        match holder_fit(&samples, label, window) {
            Ok(rep) => {
                match rep.alpha_hat {
                    Some(a) if !rep.low_confidence => {
                        checks.push(Check::at_least(&name, false, a, bound))
                    }
                    Some(_) => checks.push(Check::skip(
                        &name,
                        false,
                        format!("only {} pairs", rep.pair_count),
                    )),
                    None => checks.push(Check::skip(&name, false, "all displacements vanish")),
                }
                reports.push(rep);
            }
            Err(e) => checks.push(Check::skip(&name, false, skip_reason(&e))),
        }
    }
    reports
}

fn constant_checks(
    mm: &MultiMap,
    inv: &InverseMaps,
    s2: &[usize],
    window: ScaleWindow,
    checks: &mut Vec<Check>,
) -> Option<RegionConstants> {
    const NAMES: [&str; 3] = [
        "inner trace bound",
        "segment normal sweep",
        "inverse injectivity",
    ];
    if s2.len() < 2 {
        for name in NAMES {
            checks.push(Check::skip(name, false, "fewer than two bivalent atoms"));
        }
        return None;
    }
    let rc = match region_constants(mm, s2, window) {
        Ok(rc) => rc,
        Err(e) => {
            for name in NAMES {
                checks.push(Check::skip(name, false, skip_reason(&e)));
            }
            return None;
        }
    };
    checks.push(match t_minus_bound_check(mm, s2, window, &rc) {
        Ok(b) => Check::at_most(NAMES[0], false, b.max_ratio, 1.0),
        Err(e) => Check::skip(NAMES[0], false, skip_reason(&e)),
    });
    checks.push(match segment_normal_sweep(mm, s2, rc.k_u) {
        Ok(s) => Check::flag(
            NAMES[1],
            false,
            s.failures == 0,
            format!("{} failures in {} pairs", s.failures, s.pairs_checked),
        ),
        Err(e) => Check::skip(NAMES[1], false, skip_reason(&e)),
    });
    let t2 = inv.indices_in(TargetRegion::T2);
    let exponent = 1.0 / rc.exponent;
    checks.push(match injectivity_lower_bound(inv, &t2, exponent, window) {
        Ok(r) => Check::at_least(NAMES[2], false, r.min_ratio_minus, 1.0 / rc.c_minus_proof),
        Err(e) => Check::skip(NAMES[2], false, skip_reason(&e)),
    });
    Some(rc)
}

fn mtw_checks(suite: &MtwSuite, checks: &mut Vec<Check>) {
    checks.push(Check::at_most(
        "twist injectivity",
        false,
        (suite.twist.min_margin - 2.0).abs(),
        1e-10,
    ));
    checks.push(Check::flag(
        "nondegenerate cross derivative",
        false,
        suite.nondegeneracy.pass,
        format!("min |det| {:.3e}", suite.nondegeneracy.min_margin),
    ));
    checks.push(Check::flag(
        "determinant decay along a ray",
        false,
        profile_strictly_decreasing(&suite.profile),
        "strictly decreasing",
    ));
    match &suite.cross_curvature {
        Some(cc) => checks.push(Check::flag(
            "cross-curvature on null pairs",
            false,
            cc.pass,
            format!("min {:.3e} over {} pairs", cc.min_margin, cc.sample_count),
        )),
        None => checks.push(Check::skip(
            "cross-curvature on null pairs",
            false,
            "no null pairs on S^1",
        )),
    }
    let worst = suite
        .biconvex_vertical
        .min_margin
        .min(suite.biconvex_horizontal.min_margin);
    checks.push(Check::at_most(
        "chart image convexity",
        false,
        -worst,
        crate::mtw::WITNESS_TOL,
    ));
}

fn finish(
    cfg: &RunConfig,
    specs: (&str, &str),
    total_cost: f64,
    summary: BTreeMap<String, f64>,
    checks: Vec<Check>,
) -> Result<RunReport> {
    let report = RunReport {
        config: cfg.clone(),
        mu: specs.0.into(),
        nu: specs.1.into(),
        total_cost,
        summary,
        checks,
    };
    write_json(&cfg.output_dir, "report.json", &report)?;
    Ok(report)
}

/// Full run from measure specs. Solver failures surface as `Err`; invariant
/// failures are recorded in the report (see [`RunReport::exit_code`]).
pub fn run_pipeline(cfg: &RunConfig, mu_spec: &str, nu_spec: &str) -> Result<RunReport> {
    cfg.validate()?;
    let (mu, nu) = prepare_measures(cfg, &mu_spec.parse()?, &nu_spec.parse()?)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    mu.save_json(&dir.join("mu.json"))?;
    nu.save_json(&dir.join("nu.json"))?;
    let (coupling, duals) = match cfg.solver {
        SolverKind::Exact => solve_exact(&mu, &nu)?,
        SolverKind::Entropic => solve_entropic(&mu, &nu, cfg.reg, cfg.max_iter, cfg.entropic_tol)?,
    };
    coupling.write_csv(BufWriter::new(File::create(dir.join("coupling.csv"))?))?;
    write_json(dir, "duals.json", &duals)?;
    diagnose(cfg, (mu_spec, nu_spec), &mu, &nu, &coupling, Some(&duals))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(config(format!("unknown report format '{s}'"))),
        }
    }
}

pub fn load_report(run_dir: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(run_dir.join("report.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the check table of a finished run as `checks.json` or `checks.csv`.
pub fn export_report(run_dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    let report = load_report(run_dir)?;
    match format {
        ReportFormat::Json => {
            let path = run_dir.join("checks.json");
            write_json(run_dir, "checks.json", &report.checks)?;
            Ok(path)
        }
        ReportFormat::Csv => {
            let path = run_dir.join("checks.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["name", "hard", "status", "value", "limit", "detail"])?;
            let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for c in &report.checks {
                w.write_record([
                    c.name.clone(),
                    c.hard.to_string(),
                    c.status.to_string().to_lowercase(),
                    num(c.value),
                    num(c.limit),
                    c.detail.clone(),
                ])?;
            }
            w.flush()?;
            Ok(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path, mesh: usize) -> RunConfig {
        RunConfig {
            mesh_count: mesh,
            mtw_samples: 20,
            output_dir: dir.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn validation() {
        let d = Path::new("x");
        assert!(cfg(d, 4).validate().is_ok());
        assert!(matches!(cfg(d, 3).validate(), Err(Error::Config(_))));
        let mut c = cfg(d, 10);
        c.merge_tol = Some(0.0);
        assert!(c.validate().is_err());
        assert!("cap:0.9".parse::<MeasureSpec>().is_ok());
        assert!(matches!(
            "a.json".parse::<MeasureSpec>(),
            Ok(MeasureSpec::File(_))
        ));
        assert!("blob".parse::<MeasureSpec>().is_err());
    }

    #[test]
    fn identity_run_is_all_s1() {
        let tmp = tempfile::tempdir().unwrap();
        let rep = run_pipeline(&cfg(tmp.path(), 120), "uniform", "uniform").unwrap();
        assert_eq!(rep.exit_code(), 0, "{:#?}", rep.hard_failures());
        assert_eq!(rep.summary["S1"], 120.0);
        assert!(rep.total_cost.abs() < 1e-10);
        for f in [
            "mu.json",
            "nu.json",
            "coupling.csv",
            "duals.json",
            "multimap.json",
            "regions.json",
            "mtw.json",
        ] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn exports_agree() {
        let tmp = tempfile::tempdir().unwrap();
        run_pipeline(&cfg(tmp.path(), 100), "cap:0.9", "uniform").unwrap();
        let j = export_report(tmp.path(), ReportFormat::Json).unwrap();
        let c = export_report(tmp.path(), ReportFormat::Csv).unwrap();
        let checks: Vec<Check> = serde_json::from_str(&fs::read_to_string(j).unwrap()).unwrap();
        let mut r = csv::Reader::from_path(c).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), checks.len());
        for (row, chk) in rows.iter().zip(&checks) {
            assert_eq!(&row[0], chk.name.as_str());
            assert_eq!(row[3].parse::<f64>().ok(), chk.value);
            assert_eq!(row[4].parse::<f64>().ok(), chk.limit);
        }
        assert!(matches!(
            export_report(&tmp.path().join("missing"), ReportFormat::Csv),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn rotation_is_orthogonal() {
        let q = plane_rotation(3, 0.7);
        let i = &q.transpose() * &q;
        assert!((i - DMatrix::identity(3, 3)).abs().max() < 1e-15);
    }
}
