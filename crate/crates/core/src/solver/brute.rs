//! Exhaustive search over permutations, the reference for small instances.

use itertools::Itertools;

use super::{Coupling, CouplingEntry, TransportProblem};
use crate::error::{config, Result};
use crate::measure::DiscreteMeasure;

pub const BRUTE_FORCE_MAX: usize = 8;

/// Optimal plan for `N <= 8` atoms of weight `1/N` on each side.
pub fn brute_force_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Coupling> {
    let n = mu.len();
    if n != nu.len() {
        return Err(config("brute force needs equal atom counts"));
    }
    if n > BRUTE_FORCE_MAX {
        return Err(config(format!(
            "brute force limited to N <= {BRUTE_FORCE_MAX}, got {n}"
        )));
    }
    let w = 1.0 / n as f64;
    if mu
        .weights()
        .iter()
        .chain(nu.weights())
        .any(|x| (x - w).abs() > 1e-12)
    {
        return Err(config("brute force needs all weights equal to 1/N"));
    }
    let problem = TransportProblem::from_measures(mu, nu)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..n).permutations(n) {
        let cost: f64 = perm.iter().enumerate().map(|(i, &j)| problem.c(i, j)).sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, perm));
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    let entries = perm
        .into_iter()
        .enumerate()
        .map(|(i, j)| CouplingEntry { i, j, mass: w })
        .collect();
    Ok(Coupling::from_entries(entries, &problem))
}
