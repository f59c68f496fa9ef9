//! Log-domain Sinkhorn iterations for entropically regularized transport.
//!
//! The plan is `P_ij = exp((f_i + g_j - C_ij) / reg)`; after each sweep the
//! column marginals are exact and the row marginals are monitored.

use super::{
    c_transform_rows, Coupling, CouplingEntry, DualPotentials, TransportProblem, FLOW_FLOOR,
};
use crate::error::{config, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::par;

const CHECK_EVERY: usize = 10;

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = it.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropic plan and feasible duals. The duals are `phi = g` and the
/// c-transform of `g` on the source side.
pub fn solve_entropic(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    reg: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(Coupling, DualPotentials)> {
    let problem = TransportProblem::from_measures(mu, nu)?;
    solve_entropic_problem(&problem, reg, max_iter, tol)
}

pub fn solve_entropic_problem(
    problem: &TransportProblem,
    reg: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(Coupling, DualPotentials)> {
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(config("entropic regularization must be positive"));
    }
    if !(tol > 0.0) {
        return Err(config("tolerance must be positive"));
    }
    let (m, n) = (problem.rows(), problem.cols());
    let c = &problem.cost;
    let loga: Vec<f64> = problem.supply.iter().map(|a| a.ln()).collect();
    let logb: Vec<f64> = problem.demand.iter().map(|b| b.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];

    let row_violation = |f: &[f64], g: &[f64]| -> f64 {
        par::max_range(m, |i| {
            let s: f64 = (0..n)
                .map(|j| ((f[i] + g[j] - c[i * n + j]) / reg).exp())
                .sum();
            (s - problem.supply[i]).abs()
        })
    };

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    while iterations < max_iter {
        f = par::map_range(m, |i| {
            if problem.supply[i] == 0.0 {
                return f64::NEG_INFINITY;
            }
            reg * loga[i] - reg * log_sum_exp((0..n).map(|j| (g[j] - c[i * n + j]) / reg))
        });
        g = par::map_range(n, |j| {
            if problem.demand[j] == 0.0 {
                return f64::NEG_INFINITY;
            }
            reg * logb[j] - reg * log_sum_exp((0..m).map(|i| (f[i] - c[i * n + j]) / reg))
        });
        iterations += 1;
        if iterations % CHECK_EVERY == 0 || iterations == max_iter {
            violation = row_violation(&f, &g);
            if violation <= tol {
                break;
            }
        }
    }
    if violation > tol {
        return Err(Error::Convergence {
            violation,
            tol,
            iterations,
        });
    }

    let rows: Vec<Vec<CouplingEntry>> = par::map_range(m, |i| {
        (0..n)
            .filter_map(|j| {
                let mass = ((f[i] + g[j] - c[i * n + j]) / reg).exp();
                (mass > FLOW_FLOOR).then_some(CouplingEntry { i, j, mass })
            })
            .collect()
    });
    let coupling = Coupling::from_entries(rows.into_iter().flatten().collect(), problem);
    let phi: Vec<f64> = g
        .iter()
        .map(|x| if x.is_finite() { *x } else { 0.0 })
        .collect();
    let psi = c_transform_rows(problem, &phi);
    let duals = DualPotentials {
        phi,
        psi_vals: psi,
        total_cost: coupling.total_cost,
    };
    Ok((coupling, duals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpherePoint;
    use crate::solver::solve_exact;

    fn two_by_two() -> (DiscreteMeasure, DiscreteMeasure) {
        let p = |v: [f64; 3]| SpherePoint::new(v.to_vec()).unwrap();
        let mu = DiscreteMeasure::new(
            2,
            vec![p([1.0, 0.0, 0.0]), p([0.0, 1.0, 0.0])],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        )
        .unwrap();
        let nu = DiscreteMeasure::new(
            2,
            vec![p([0.8, 0.6, 0.0]), p([0.6, 0.8, 0.0])],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        )
        .unwrap();
        (mu, nu)
    }

    fn dense(c: &Coupling) -> [[f64; 2]; 2] {
        let mut d = [[0.0; 2]; 2];
        for e in &c.entries {
            d[e.i][e.j] = e.mass;
        }
        d
    }

    #[test]
    fn low_temperature_matches_exact() {
        let (mu, nu) = two_by_two();
        let (exact, _) = solve_exact(&mu, &nu).unwrap();
        let (ent, _) = solve_entropic(&mu, &nu, 0.01, 10_000, 1e-9).unwrap();
        let (a, b) = (dense(&exact), dense(&ent));
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-3, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn high_temperature_is_near_product() {
        let (mu, nu) = two_by_two();
        let (ent, _) = solve_entropic(&mu, &nu, 10.0, 10_000, 1e-12).unwrap();
        for row in dense(&ent) {
            for v in row {
                assert!((v - 0.25).abs() < 0.02);
            }
        }
    }

    #[test]
    fn mismatch_and_bad_reg() {
        let p = TransportProblem::new(vec![0.5, 0.5], vec![0.5, 0.5], vec![0.0, 1.0, 1.0, 0.0])
            .unwrap();
        assert!(matches!(
            solve_entropic_problem(&p, 0.0, 10, 1e-9),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            TransportProblem::new(vec![0.5, 0.5], vec![0.6, 0.5], vec![0.0; 4]),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn iteration_budget_exhausted() {
        let (mu, nu) = two_by_two();
        let r = solve_entropic(&mu, &nu, 0.001, 1, 1e-15);
        assert!(matches!(r, Err(Error::Convergence { iterations: 1, .. })));
    }
}
