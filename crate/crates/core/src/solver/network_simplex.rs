//! Primal network simplex on the complete bipartite graph, following the
//! spanning-tree data layout of LEMON's `NetworkSimplex` (parent / pred /
//! thread / rev_thread / succ_num / last_succ) with block-search pivoting.
//!
//! Nodes `0..m` are sources, `m..m+n` targets, `m+n` is the artificial root.
//! Arc `i*n + j` goes from source `i` to target `j`; arc `m*n + u` joins node
//! `u` to the root. Capacities are infinite, so leaving arcs always drop to
//! zero flow.

use super::{polish_duals, Coupling, CouplingEntry, DualPotentials, TransportProblem, FLOW_FLOOR};
use crate::error::{Error, Result};

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

struct Simplex<'a> {
    problem: &'a TransportProblem,
    m: usize,
    n: usize,
    arc_num: usize,

    source: Vec<usize>,
    target: Vec<usize>,
    art_cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,

    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,
    entering_tol: f64,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

const NONE: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn new(problem: &'a TransportProblem) -> Self {
        let (m, n) = (problem.rows(), problem.cols());
        let node_num = m + n;
        let arc_num = m * n;
        let all_arc = arc_num + node_num;
        let root = node_num;
        let max_cost = problem.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let art = (max_cost + 1.0) * node_num as f64;

        let mut s = Simplex {
            problem,
            m,
            n,
            arc_num,
            source: vec![0; node_num],
            target: vec![0; node_num],
            art_cost: vec![0.0; node_num],
            flow: vec![0.0; all_arc],
            state: vec![STATE_LOWER; all_arc],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![1; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![DIR_UP; node_num + 1],
            dirty_revs: Vec::new(),
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            // reduced costs carry round-off proportional to the potentials,
            // which can reach the artificial cost
            entering_tol: 64.0 * f64::EPSILON * art.max(1.0),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };

        // root
        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        s.pi[root] = 0.0;

        for u in 0..node_num {
            let e = u; // index into the artificial block
            s.parent[u] = root;
            s.pred[u] = arc_num + e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[arc_num + e] = STATE_TREE;
            let supply = if u < m {
                problem.supply[u]
            } else {
                -problem.demand[u - m]
            };
            if supply >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.source[e] = u;
                s.target[e] = root;
                s.flow[arc_num + e] = supply;
                s.art_cost[e] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art;
                s.source[e] = root;
                s.target[e] = u;
                s.flow[arc_num + e] = -supply;
                s.art_cost[e] = art;
            }
        }
        s
    }

    #[inline]
    fn arc_source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.n
        } else {
            self.source[e - self.arc_num]
        }
    }

    #[inline]
    fn arc_target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.m + e % self.n
        } else {
            self.target[e - self.arc_num]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.problem.cost[e]
        } else {
            self.art_cost[e - self.arc_num]
        }
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.entering_tol;
        let mut found = false;
        let mut cnt = self.block_size;
        let n = self.n;
        let m = self.m;
        let start = self.next_arc;
        let mut e = start;
        for _ in 0..self.arc_num {
            if self.state[e] == STATE_LOWER {
                let c = self.problem.cost[e] + self.pi[e / n] - self.pi[m + e % n];
                if c < min {
                    min = c;
                    self.in_arc = e;
                    found = true;
                }
            }
            e += 1;
            if e == self.arc_num {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.arc_source(self.in_arc);
        let mut v = self.arc_target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Returns `false` when the cycle has no blocking arc (unbounded).
    fn find_leaving_arc(&mut self) -> bool {
        let first = self.arc_source(self.in_arc);
        let second = self.arc_target(self.in_arc);
        self.delta = f64::INFINITY;
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            self.flow[self.in_arc] += val;
            let mut u = self.arc_source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.arc_target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.arc_source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.arc_source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in]
            - self.pi[self.u_in]
            - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Solver("unbounded pivot cycle".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
        }
        Ok(())
    }

    #[cfg(test)]
    fn check_tree(&self) {
        let node_num = self.m + self.n;
        let root = node_num;
        // thread visits every node once, starting at the root
        let mut seen = vec![false; node_num + 1];
        let mut u = root;
        for _ in 0..=node_num {
            assert!(!seen[u]);
            seen[u] = true;
            assert_eq!(self.rev_thread[self.thread[u]], u);
            u = self.thread[u];
        }
        assert_eq!(u, root);
        for v in 0..node_num {
            let e = self.pred[v];
            let (s, t) = (self.arc_source(e), self.arc_target(e));
            let p = self.parent[v];
            if self.pred_dir[v] == DIR_UP {
                assert_eq!((s, t), (v, p));
            } else {
                assert_eq!((s, t), (p, v));
            }
            assert_eq!(self.state[e], STATE_TREE);
            let rc = self.arc_cost(e) + self.pi[s] - self.pi[t];
            assert!(rc.abs() < 1e-9, "tree arc reduced cost {rc}");
        }
    }
}

pub(super) fn solve(problem: &TransportProblem) -> Result<(Coupling, DualPotentials)> {
    let mut s = Simplex::new(problem);
    s.run()?;
    finish(&s)
}

fn finish(s: &Simplex) -> Result<(Coupling, DualPotentials)> {
    let problem = s.problem;
    let stranded = s.flow[s.arc_num..].iter().fold(0.0f64, |a, f| a.max(*f));
    if stranded > 1e-9 {
        return Err(Error::Solver(format!(
            "infeasible: {stranded:.3e} units left on artificial arcs"
        )));
    }
    let entries = (0..s.arc_num)
        .filter(|&e| s.flow[e] > FLOW_FLOOR)
        .map(|e| CouplingEntry {
            i: e / s.n,
            j: e % s.n,
            mass: s.flow[e],
        })
        .collect();
    let coupling = Coupling::from_entries(entries, problem);

    // psi_i + phi_j <= c_ij with psi = -pi(source), phi = pi(target); the
    // potentials carry offsets of the size of the artificial cost
    let phi0: Vec<f64> = (0..s.n).map(|j| s.pi[s.m + j]).collect();
    let duals = polish_duals(problem, phi0, coupling.total_cost);
    Ok((coupling, duals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(m: usize, n: usize, seed: u64) -> TransportProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        a.iter_mut().for_each(|x| *x /= sa);
        b.iter_mut().for_each(|x| *x /= sb);
        let cost = (0..m * n).map(|_| rng.gen_range(0.0..4.0)).collect();
        TransportProblem::new(a, b, cost).unwrap()
    }

    #[test]
    fn tree_stays_consistent() {
        let p = random_problem(9, 13, 5);
        let mut s = Simplex::new(&p);
        s.check_tree();
        let mut pivots = 0;
        while s.find_entering_arc() {
            s.find_join_node();
            assert!(s.find_leaving_arc());
            s.change_flow();
            s.update_tree_structure();
            s.update_potential();
            s.check_tree();
            pivots += 1;
        }
        assert!(pivots > 0);
        assert!(s.flow.iter().all(|f| *f >= 0.0));
    }

    #[test]
    fn optimal_against_duals() {
        for seed in 0..20 {
            let (m, n) = (3 + seed as usize % 7, 2 + seed as usize % 11);
            let p = random_problem(m, n, seed);
            let (c, d) = solve(&p).unwrap();
            let rows = c.row_sums(m);
            let cols = c.col_sums(n);
            for (r, a) in rows.iter().zip(&p.supply) {
                assert!((r - a).abs() < 1e-12);
            }
            for (r, b) in cols.iter().zip(&p.demand) {
                assert!((r - b).abs() < 1e-12);
            }
            for i in 0..m {
                for j in 0..n {
                    assert!(d.psi_vals[i] + d.phi[j] <= p.c(i, j) + 1e-12);
                }
            }
            let dual: f64 = d
                .psi_vals
                .iter()
                .zip(&p.supply)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + d.phi.iter().zip(&p.demand).map(|(x, w)| x * w).sum::<f64>();
            assert!(
                (dual - c.total_cost).abs() < 1e-10,
                "gap {}",
                c.total_cost - dual
            );
            assert!(c.len() < m + n);
        }
    }
}
