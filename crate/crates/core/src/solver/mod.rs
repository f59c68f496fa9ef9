//! Discrete Kantorovich problem for the cost `c(x, y) = |x - y|^2`.
//!
//! Duals are stored in cost form, `psi_i + phi_j <= c(x_i, y_j)`. Because
//! `c = 2 - 2 x·y` on the sphere, the convex (correlation-form) potential is
//! `ψ(x) = max_j (x·y_j - φ̃_j)` with `φ̃_j = -phi_j / 2`, and at the source
//! atoms `ψ(x_i) = 1 - psi_i / 2`.

mod assignment;
mod brute;
mod network_simplex;
mod sinkhorn;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::geometry::{cost_extrinsic, SpherePoint};
use crate::linalg::dot;
use crate::measure::DiscreteMeasure;
use crate::par;

pub use brute::brute_force_oracle;
pub use sinkhorn::solve_entropic;

/// Marginal and duality tolerance for exact solves.
pub const LP_TOL: f64 = 1e-8;
/// Absolute tolerance for ties in the Brenier argmax.
pub const TIE_TOL: f64 = 1e-8;
/// Flows below this are treated as round-off and dropped from the coupling.
pub const FLOW_FLOOR: f64 = 1e-14;

/// Dense `m x n` transport problem with row-major costs.
#[derive(Clone, Debug)]
pub struct TransportProblem {
    pub supply: Vec<f64>,
    pub demand: Vec<f64>,
    pub cost: Vec<f64>,
}

impl TransportProblem {
    pub fn new(supply: Vec<f64>, demand: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if supply.is_empty() || demand.is_empty() {
            return Err(config("transport problem needs atoms on both sides"));
        }
        if cost.len() != supply.len() * demand.len() {
            return Err(config("cost matrix has the wrong size"));
        }
        if supply
            .iter()
            .chain(&demand)
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(config("weights must be finite and nonnegative"));
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(config("costs must be finite"));
        }
        let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
        if (sa - sb).abs() > LP_TOL {
            return Err(Error::Solver(format!(
                "marginal infeasibility: source mass {sa} vs target mass {sb}"
            )));
        }
        Ok(TransportProblem {
            supply,
            demand,
            cost,
        })
    }

    pub fn from_measures(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        if mu.n() != nu.n() {
            return Err(config(format!(
                "μ lives on S^{} but ν on S^{}",
                mu.n(),
                nu.n()
            )));
        }
        let cost = cost_matrix(mu.points(), nu.points());
        Self::new(mu.weights().to_vec(), nu.weights().to_vec(), cost)
    }

    pub fn rows(&self) -> usize {
        self.supply.len()
    }

    pub fn cols(&self) -> usize {
        self.demand.len()
    }

    pub fn c(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.demand.len() + j]
    }

    fn uniform_square(&self) -> bool {
        let n = self.rows();
        if n != self.cols() {
            return false;
        }
        let w = 1.0 / n as f64;
        self.supply
            .iter()
            .chain(&self.demand)
            .all(|x| (x - w).abs() <= 1e-14)
    }
}

/// `c(x_i, y_j)` for all pairs, row-major.
pub fn cost_matrix(xs: &[SpherePoint], ys: &[SpherePoint]) -> Vec<f64> {
    par::fill_matrix(xs.len(), ys.len(), |i, j| cost_extrinsic(&xs[i], &ys[j]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// Sparse transport plan; entries sorted by `(i, j)`, masses strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub entries: Vec<CouplingEntry>,
    pub total_cost: f64,
}

impl Coupling {
    /// Sorts, merges duplicates, drops non-positive masses and recomputes the cost.
    pub fn from_entries(mut entries: Vec<CouplingEntry>, problem: &TransportProblem) -> Coupling {
        entries.retain(|e| e.mass > 0.0);
        entries.sort_by_key(|e| (e.i, e.j));
        entries.dedup_by(|b, a| {
            if a.i == b.i && a.j == b.j {
                a.mass += b.mass;
                true
            } else {
                false
            }
        });
        let total_cost = entries.iter().map(|e| e.mass * problem.c(e.i, e.j)).sum();
        Coupling {
            entries,
            total_cost,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn row_sums(&self, rows: usize) -> Vec<f64> {
        let mut s = vec![0.0; rows];
        for e in &self.entries {
            s[e.i] += e.mass;
        }
        s
    }

    pub fn col_sums(&self, cols: usize) -> Vec<f64> {
        let mut s = vec![0.0; cols];
        for e in &self.entries {
            s[e.j] += e.mass;
        }
        s
    }

    /// Largest absolute deviation of a row or column sum from its weight.
    pub fn marginal_violation(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let rows = self.row_sums(mu.len());
        let cols = self.col_sums(nu.len());
        rows.iter()
            .zip(mu.weights())
            .chain(cols.iter().zip(nu.weights()))
            .map(|(s, w)| (s - w).abs())
            .fold(0.0, f64::max)
    }

    /// Targets of each source, as `(j, mass)` lists.
    pub fn by_source(&self, rows: usize) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); rows];
        for e in &self.entries {
            out[e.i].push((e.j, e.mass));
        }
        out
    }

    /// Sources of each target, as `(i, mass)` lists.
    pub fn by_target(&self, cols: usize) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); cols];
        for e in &self.entries {
            out[e.j].push((e.i, e.mass));
        }
        out
    }

    /// `i,j,mass` rows with a header line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wr.serialize(e)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `i,j,mass` rows; the total cost is recomputed against `mu`, `nu`.
    pub fn read_csv<R: Read>(r: R, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Coupling> {
        let mut rd = csv::Reader::from_reader(r);
        let mut entries = Vec::new();
        for rec in rd.deserialize() {
            let e: CouplingEntry = rec?;
            if e.i >= mu.len() || e.j >= nu.len() {
                return Err(config(format!(
                    "coupling entry ({}, {}) out of range",
                    e.i, e.j
                )));
            }
            entries.push(e);
        }
        let total_cost = entries
            .iter()
            .map(|e| e.mass * cost_extrinsic(mu.point(e.i), nu.point(e.j)))
            .sum();
        entries.sort_by_key(|e| (e.i, e.j));
        Ok(Coupling {
            entries,
            total_cost,
        })
    }
}

/// Kantorovich potentials in cost form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    #[serde(rename = "psi")]
    pub psi_vals: Vec<f64>,
    pub total_cost: f64,
}

impl DualPotentials {
    /// `Σ psi_i μ_i + Σ phi_j ν_j`
    pub fn objective(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        dot(&self.psi_vals, mu.weights()) + dot(&self.phi, nu.weights())
    }

    /// Correlation-form target offsets `φ̃_j = -phi_j / 2`.
    pub fn phi_tilde(&self) -> Vec<f64> {
        self.phi.iter().map(|p| -0.5 * p).collect()
    }

    /// `ψ(x_i) = 1 - psi_i / 2` at the source atoms.
    pub fn psi_tilde(&self) -> Vec<f64> {
        self.psi_vals.iter().map(|p| 1.0 - 0.5 * p).collect()
    }
}

/// `psi_i = min_j (c_ij - phi_j)`: the tightest feasible source potential.
pub(crate) fn c_transform_rows(problem: &TransportProblem, phi: &[f64]) -> Vec<f64> {
    let n = problem.cols();
    par::map_range(problem.rows(), |i| {
        let row = &problem.cost[i * n..(i + 1) * n];
        row.iter()
            .zip(phi)
            .map(|(c, p)| c - p)
            .fold(f64::INFINITY, f64::min)
    })
}

/// `phi_j = min_i (c_ij - psi_i)`
pub(crate) fn c_transform_cols(problem: &TransportProblem, psi: &[f64]) -> Vec<f64> {
    let n = problem.cols();
    par::map_range(n, |j| {
        psi.iter()
            .enumerate()
            .map(|(i, p)| problem.cost[i * n + j] - p)
            .fold(f64::INFINITY, f64::min)
    })
}

/// Centres `phi` and replaces both potentials by a double c-transform, so
/// they are feasible to round-off and of size comparable to the costs.
pub(crate) fn polish_duals(
    problem: &TransportProblem,
    mut phi: Vec<f64>,
    total_cost: f64,
) -> DualPotentials {
    let mean = phi.iter().sum::<f64>() / phi.len() as f64;
    phi.iter_mut().for_each(|p| *p -= mean);
    let psi = c_transform_rows(problem, &phi);
    let phi = c_transform_cols(problem, &psi);
    let psi = c_transform_rows(problem, &phi);
    DualPotentials {
        phi,
        psi_vals: psi,
        total_cost,
    }
}

/// Independent optimality check of a primal/dual pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCertificate {
    pub marginal_violation: f64,
    /// `max_ij (psi_i + phi_j - c_ij)_+`
    pub dual_infeasibility: f64,
    /// `max |c_ij - psi_i - phi_j|` over the support.
    pub slackness: f64,
    /// `total_cost - dual objective`
    pub duality_gap: f64,
}

impl OptimalityCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.marginal_violation <= tol
            && self.dual_infeasibility <= tol
            && self.slackness <= tol
            && self.duality_gap.abs() <= tol
    }
}

pub fn certify(
    coupling: &Coupling,
    duals: &DualPotentials,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> OptimalityCertificate {
    let (xs, ys) = (mu.points(), nu.points());
    let dual_infeasibility = par::max_range(xs.len(), |i| {
        ys.iter()
            .zip(&duals.phi)
            .map(|(y, p)| duals.psi_vals[i] + p - cost_extrinsic(&xs[i], y))
            .fold(0.0, f64::max)
    });
    let slackness = coupling
        .entries
        .iter()
        .map(|e| (cost_extrinsic(&xs[e.i], &ys[e.j]) - duals.psi_vals[e.i] - duals.phi[e.j]).abs())
        .fold(0.0, f64::max);
    OptimalityCertificate {
        marginal_violation: coupling.marginal_violation(mu, nu),
        dual_infeasibility,
        slackness,
        duality_gap: coupling.total_cost - duals.objective(mu, nu),
    }
}

/// Exact optimal plan and potentials.
///
/// Square problems with all weights `1/N` go through the Hungarian method;
/// everything else through a network simplex on the dense bipartite graph.
pub fn solve_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<(Coupling, DualPotentials)> {
    let problem = TransportProblem::from_measures(mu, nu)?;
    solve_problem(&problem)
}

/// [`solve_exact`] on a prebuilt problem.
pub fn solve_problem(problem: &TransportProblem) -> Result<(Coupling, DualPotentials)> {
    if problem.uniform_square() {
        Ok(assignment::solve(problem))
    } else {
        network_simplex::solve(problem)
    }
}

/// Network simplex regardless of the weights.
pub fn solve_network_simplex(problem: &TransportProblem) -> Result<(Coupling, DualPotentials)> {
    network_simplex::solve(problem)
}

/// Hungarian method; requires a square problem with uniform weights.
pub fn solve_assignment(problem: &TransportProblem) -> Result<(Coupling, DualPotentials)> {
    if !problem.uniform_square() {
        return Err(config("assignment path needs equal counts and weights 1/N"));
    }
    Ok(assignment::solve(problem))
}

/// `max [c_ij + c_kl - c_il - c_kj]_+` over pairs of support entries.
pub fn cyclical_monotonicity_violation(
    coupling: &Coupling,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> f64 {
    let e = &coupling.entries;
    let (xs, ys) = (mu.points(), nu.points());
    let c: Vec<f64> = e
        .iter()
        .map(|a| cost_extrinsic(&xs[a.i], &ys[a.j]))
        .collect();
    par::max_range(e.len(), |a| {
        let (i, j) = (e[a].i, e[a].j);
        let mut worst: f64 = 0.0;
        for b in a + 1..e.len() {
            let (k, l) = (e[b].i, e[b].j);
            if i == k || j == l {
                continue;
            }
            let v = c[a] + c[b] - cost_extrinsic(&xs[i], &ys[l]) - cost_extrinsic(&xs[k], &ys[j]);
            worst = worst.max(v);
        }
        worst
    })
    .max(0.0)
}

/// `ψ(x) = max_j (x·y_j - φ̃_j)` and every `j` within [`TIE_TOL`] of the max.
pub fn brenier_potential(
    duals: &DualPotentials,
    nu: &DiscreteMeasure,
    x: &SpherePoint,
) -> (f64, Vec<usize>) {
    brenier_potential_with_tol(duals, nu, x, TIE_TOL)
}

pub fn brenier_potential_with_tol(
    duals: &DualPotentials,
    nu: &DiscreteMeasure,
    x: &SpherePoint,
    tie_tol: f64,
) -> (f64, Vec<usize>) {
    let vals: Vec<f64> = nu
        .points()
        .iter()
        .zip(&duals.phi)
        .map(|(y, p)| x.dot(y) + 0.5 * p)
        .collect();
    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| best - **v <= tie_tol)
        .map(|(j, _)| j)
        .collect();
    (best, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(v: &[f64]) -> SpherePoint {
        SpherePoint::new(v.to_vec()).unwrap()
    }

    fn measure(points: Vec<SpherePoint>, weights: Vec<f64>) -> DiscreteMeasure {
        let n = points[0].sphere_dim();
        let areas = vec![1.0; points.len()];
        DiscreteMeasure::new(n, points, weights, areas).unwrap()
    }

    fn two_by_two() -> (DiscreteMeasure, DiscreteMeasure) {
        let mu = measure(
            vec![pt(&[1.0, 0.0, 0.0]), pt(&[0.0, 1.0, 0.0])],
            vec![0.5, 0.5],
        );
        let nu = measure(
            vec![pt(&[0.8, 0.6, 0.0]), pt(&[0.6, 0.8, 0.0])],
            vec![0.5, 0.5],
        );
        (mu, nu)
    }

    fn check_optimal(c: &Coupling, d: &DualPotentials, mu: &DiscreteMeasure, nu: &DiscreteMeasure) {
        let cert = certify(c, d, mu, nu);
        assert!(cert.holds(LP_TOL), "{cert:?}");
    }

    #[test]
    fn antipodal_identity() {
        let mu = measure(
            vec![pt(&[0.0, 0.0, 1.0]), pt(&[0.0, 0.0, -1.0])],
            vec![0.5, 0.5],
        );
        let (c, d) = solve_exact(&mu, &mu).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.entries.iter().all(|e| e.i == e.j));
        assert_abs_diff_eq!(c.total_cost, 0.0, epsilon = 1e-15);
        check_optimal(&c, &d, &mu, &mu);
    }

    #[test]
    fn two_by_two_diagonal() {
        let (mu, nu) = two_by_two();
        for (c, d) in [
            solve_exact(&mu, &nu).unwrap(),
            solve_network_simplex(&TransportProblem::from_measures(&mu, &nu).unwrap()).unwrap(),
        ] {
            assert_eq!(
                c.entries.iter().map(|e| (e.i, e.j)).collect::<Vec<_>>(),
                vec![(0, 0), (1, 1)]
            );
            assert_abs_diff_eq!(c.total_cost, 0.4, epsilon = 1e-12);
            check_optimal(&c, &d, &mu, &nu);
        }
    }

    #[test]
    fn single_source_splits() {
        let mu = measure(vec![pt(&[0.0, 0.0, 1.0])], vec![1.0]);
        let nu = measure(
            vec![pt(&[1.0, 0.0, 0.0]), pt(&[0.0, 1.0, 0.0])],
            vec![0.5, 0.5],
        );
        let (c, d) = solve_exact(&mu, &nu).unwrap();
        assert_eq!(c.len(), 2);
        for e in &c.entries {
            assert_abs_diff_eq!(e.mass, 0.5, epsilon = 1e-15);
        }
        check_optimal(&c, &d, &mu, &nu);
    }

    #[test]
    fn mass_mismatch_is_solver_error() {
        let r = TransportProblem::new(vec![0.5, 0.5], vec![0.7, 0.5], vec![0.0; 4]);
        assert!(matches!(r, Err(Error::Solver(_))));
    }

    #[test]
    fn crossed_plan_violation() {
        let (mu, nu) = two_by_two();
        let (opt, _) = solve_exact(&mu, &nu).unwrap();
        assert_abs_diff_eq!(cyclical_monotonicity_violation(&opt, &mu, &nu), 0.0);
        let problem = TransportProblem::from_measures(&mu, &nu).unwrap();
        let crossed = Coupling::from_entries(
            vec![
                CouplingEntry {
                    i: 0,
                    j: 1,
                    mass: 0.5,
                },
                CouplingEntry {
                    i: 1,
                    j: 0,
                    mass: 0.5,
                },
            ],
            &problem,
        );
        assert_abs_diff_eq!(crossed.total_cost, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(
            cyclical_monotonicity_violation(&crossed, &mu, &nu),
            0.8,
            epsilon = 1e-12
        );
        let single = Coupling::from_entries(
            vec![CouplingEntry {
                i: 0,
                j: 0,
                mass: 1.0,
            }],
            &problem,
        );
        assert_eq!(cyclical_monotonicity_violation(&single, &mu, &nu), 0.0);
    }

    #[test]
    fn brenier_examples() {
        let nu = measure(vec![pt(&[0.0, 1.0])], vec![1.0]);
        let duals = DualPotentials {
            phi: vec![0.0],
            psi_vals: vec![],
            total_cost: 0.0,
        };
        let x = pt(&[0.6, 0.8]);
        let (v, arg) = brenier_potential(&duals, &nu, &x);
        assert_abs_diff_eq!(v, 0.8);
        assert_eq!(arg, vec![0]);

        let nu = measure(vec![pt(&[1.0, 0.0]), pt(&[0.0, 1.0])], vec![0.5, 0.5]);
        let duals = DualPotentials {
            phi: vec![0.0, 0.0],
            psi_vals: vec![],
            total_cost: 0.0,
        };
        let h = 0.5f64.sqrt();
        let (_, arg) =
            brenier_potential(&duals, &nu, &SpherePoint::normalized(vec![h, h]).unwrap());
        assert_eq!(arg, vec![0, 1]);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let (mu, nu) = two_by_two();
        let (c, d) = solve_exact(&mu, &nu).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,mass\n"));
        let back = Coupling::read_csv(&buf[..], &mu, &nu).unwrap();
        assert_eq!(back.entries, c.entries);
        assert_abs_diff_eq!(back.total_cost, c.total_cost, epsilon = 1e-15);

        let json = serde_json::to_value(&d).unwrap();
        assert!(json.get("psi").is_some() && json.get("phi").is_some());
        let back: DualPotentials = serde_json::from_value(json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn correlation_form_matches_source_potential() {
        let (mu, nu) = two_by_two();
        let (_, d) = solve_exact(&mu, &nu).unwrap();
        let tilde = d.psi_tilde();
        for (i, x) in mu.points().iter().enumerate() {
            let (v, _) = brenier_potential(&d, &nu, x);
            assert_abs_diff_eq!(v, tilde[i], epsilon = 1e-12);
        }
    }
}
