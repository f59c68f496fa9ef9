//! Hungarian method with row/column potentials, `O(N^3)`.

use super::{polish_duals, Coupling, CouplingEntry, DualPotentials, TransportProblem};

/// Square problem with all weights `1/N`: the optimum is a permutation.
pub(super) fn solve(problem: &TransportProblem) -> (Coupling, DualPotentials) {
    let n = problem.rows();
    // u_i + v_j <= c_ij is the cost-form dual for weights 1/N; v alone
    // determines the rest through c-transforms
    let (assign, _, v) = hungarian(n, |i, j| problem.c(i, j));
    let w = 1.0 / n as f64;
    let entries = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| CouplingEntry { i, j, mass: w })
        .collect();
    let coupling = Coupling::from_entries(entries, problem);
    let duals = polish_duals(problem, v, coupling.total_cost);
    (coupling, duals)
}

/// Returns the column of each row and the potentials `(u, v)`.
pub(crate) fn hungarian<F: Fn(usize, usize) -> f64>(
    n: usize,
    c: F,
) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based arrays, index 0 is the virtual column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_assignment() {
        let c = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let (a, u, v) = hungarian(3, |i, j| c[i][j]);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        assert_eq!(total, 5.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!(u[i] + v[j] <= c[i][j] + 1e-12);
            }
            assert!((u[i] + v[a[i]] - c[i][a[i]]).abs() < 1e-12);
        }
    }
}
