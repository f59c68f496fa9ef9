//! Bivalent map pair `(t⁺, t⁻)` read off an optimal coupling, the inverse
//! pair `(s⁺, s⁻)`, and the region labels on both sides.
//!
//! Each source atom's images are grouped by single-linkage clustering at
//! `merge_tol`; each cluster becomes one image point (mass-weighted spherical
//! average). One cluster means the atom is univalent, two means bivalent, and
//! more than two is an under-resolved discretization.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::linalg::{axpy, dist, norm};
use crate::measure::DiscreteMeasure;
use crate::par;
use crate::solver::Coupling;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    S0,
    S1,
    S2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetRegion {
    T0,
    T1,
    T2,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for TargetRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One merged image: the averaged point, its mass and the atoms it merges.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCluster {
    pub point: SpherePoint,
    pub mass: f64,
    pub members: Vec<usize>,
}

/// Single-linkage clusters of `(index, point, mass)` at Euclidean distance `tol`,
/// ordered by first appearance.
pub fn cluster_images(items: &[(usize, &SpherePoint, f64)], tol: f64) -> Result<Vec<ImageCluster>> {
    let k = items.len();
    let mut label = vec![usize::MAX; k];
    let mut count = 0;
    for start in 0..k {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        let mut stack = vec![start];
        while let Some(q) = stack.pop() {
            for l in 0..k {
                if label[l] == usize::MAX && items[q].1.distance(items[l].1) <= tol {
                    label[l] = count;
                    stack.push(l);
                }
            }
        }
        count += 1;
    }
    let dim = items.first().map_or(0, |it| it.1.ambient_dim());
    (0..count)
        .map(|c| {
            let mut sum = vec![0.0; dim];
            let mut mass = 0.0;
            let mut members = Vec::new();
            for (it, &l) in items.iter().zip(&label) {
                if l == c {
                    axpy(&mut sum, it.2, it.1.coords());
                    mass += it.2;
                    members.push(it.0);
                }
            }
            if norm(&sum) <= 1e-12 * mass.max(f64::MIN_POSITIVE) {
                return Err(Error::Extraction(
                    "merged images average to the origin; merge_tol is too large".into(),
                ));
            }
            Ok(ImageCluster {
                point: SpherePoint::normalized(sum)?,
                mass,
                members,
            })
        })
        .collect()
}

/// Targets receiving mass from source `i`, by descending `x_i·y`.
pub fn support_images(
    coupling: &Coupling,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    i: usize,
) -> Vec<(SpherePoint, f64)> {
    let x = mu.point(i);
    let mut out: Vec<(SpherePoint, f64)> = coupling
        .entries
        .iter()
        .filter(|e| e.i == i)
        .map(|e| (nu.point(e.j).clone(), e.mass))
        .collect();
    out.sort_by(|a, b| x.dot(&b.0).total_cmp(&x.dot(&a.0)));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapRecord {
    pub i: usize,
    pub x: SpherePoint,
    pub t_plus: SpherePoint,
    pub t_minus: SpherePoint,
    /// `(t⁺ - t⁻)·x`
    pub lambda: f64,
    /// `|t⁺ - t⁻ - λ x|`
    pub collinearity_residual: f64,
    pub bivalent: bool,
    pub region: Option<Region>,
    pub plus_targets: Vec<usize>,
    pub minus_targets: Vec<usize>,
}

impl MapRecord {
    pub fn x_dot_plus(&self) -> f64 {
        self.x.dot(&self.t_plus)
    }

    pub fn x_dot_minus(&self) -> f64 {
        self.x.dot(&self.t_minus)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiMap {
    pub records: Vec<MapRecord>,
    pub merge_tol: f64,
    pub anomalies: Vec<Anomaly>,
}

/// Record layout of the multimap JSON export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRecordJson {
    pub i: usize,
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub region: Option<Region>,
}

impl MultiMap {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices_in(&self, region: Region) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.region == Some(region))
            .map(|r| r.i)
            .collect()
    }

    pub fn region_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &self.records {
            match r.region {
                Some(Region::S0) => c[0] += 1,
                Some(Region::S1) => c[1] += 1,
                Some(Region::S2) => c[2] += 1,
                None => {}
            }
        }
        c
    }

    pub fn max_lambda(&self) -> f64 {
        self.records.iter().map(|r| r.lambda).fold(0.0, f64::max)
    }

    pub fn to_json_records(&self) -> Vec<MapRecordJson> {
        self.records
            .iter()
            .map(|r| MapRecordJson {
                i: r.i,
                t_plus: r.t_plus.coords().to_vec(),
                t_minus: r.t_minus.coords().to_vec(),
                lambda: r.lambda,
                residual: r.collinearity_residual,
                region: r.region,
            })
            .collect()
    }
}

/// Builds `t⁺`, `t⁻`, `λ` and the collinearity residual for every source atom.
/// Regions are left unset; see [`classify_regions`].
pub fn extract_multimap(
    coupling: &Coupling,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    merge_tol: f64,
) -> Result<MultiMap> {
    if !(merge_tol > 0.0) {
        return Err(crate::error::config("merge_tol must be positive"));
    }
    let by_source = coupling.by_source(mu.len());
    let records: Vec<Result<MapRecord>> = par::map_range(mu.len(), |i| {
        let x = mu.point(i);
        let items: Vec<(usize, &SpherePoint, f64)> = by_source[i]
            .iter()
            .map(|&(j, m)| (j, nu.point(j), m))
            .collect();
        if items.is_empty() {
            return Err(Error::Extraction(format!("source atom {i} sends no mass")));
        }
        let mut clusters = cluster_images(&items, merge_tol)?;
        if clusters.len() > 2 {
            return Err(Error::Extraction(format!(
                "source atom {i} has {} image clusters at merge_tol {merge_tol:.3e}; the mesh is under-resolved",
                clusters.len()
            )));
        }
        clusters.sort_by(|a, b| x.dot(&b.point).total_cmp(&x.dot(&a.point)));
        let plus = &clusters[0];
        let minus = clusters.last().expect("nonempty");
        let bivalent = clusters.len() == 2;
        let diff: Vec<f64> = plus
            .point
            .coords()
            .iter()
            .zip(minus.point.coords())
            .map(|(a, b)| a - b)
            .collect();
        let lambda = crate::linalg::dot(&diff, x.coords());
        let mut r = diff.clone();
        axpy(&mut r, -lambda, x.coords());
        Ok(MapRecord {
            i,
            x: x.clone(),
            t_plus: plus.point.clone(),
            t_minus: minus.point.clone(),
            lambda,
            collinearity_residual: norm(&r),
            bivalent,
            region: None,
            plus_targets: plus.members.clone(),
            minus_targets: if bivalent {
                minus.members.clone()
            } else {
                plus.members.clone()
            },
        })
    });
    Ok(MultiMap {
        records: records.into_iter().collect::<Result<_>>()?,
        merge_tol,
        anomalies: Vec::new(),
    })
}

/// Labels every source atom. Univalent atoms with `|x·t⁺| <= zero_tol` go to
/// `S0`, those above to `S1`; bivalent atoms to `S2`. Sign violations are
/// recorded as anomalies; univalent atoms with `x·t⁺ < -zero_tol` are put in
/// `S0` and flagged.
pub fn classify_regions(mut mm: MultiMap, zero_tol: f64) -> MultiMap {
    mm.anomalies.clear();
    for r in &mut mm.records {
        let d = r.x_dot_plus();
        r.region = Some(if r.bivalent {
            if !(d > 0.0 && r.x_dot_minus() < 0.0) {
                mm.anomalies.push(Anomaly {
                    index: r.i,
                    reason: format!(
                        "bivalent atom with x·t⁺ = {d:.3e}, x·t⁻ = {:.3e}",
                        r.x_dot_minus()
                    ),
                });
            }
            Region::S2
        } else if d.abs() <= zero_tol {
            Region::S0
        } else if d > zero_tol {
            Region::S1
        } else {
            mm.anomalies.push(Anomaly {
                index: r.i,
                reason: format!("univalent atom with x·t⁺ = {d:.3e} < -zero_tol"),
            });
            Region::S0
        });
    }
    mm
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseRecord {
    pub j: usize,
    pub y: SpherePoint,
    pub s_plus: SpherePoint,
    pub s_minus: SpherePoint,
    /// `(s⁺ - s⁻)·y`
    pub omega: f64,
    /// `|s⁺ - s⁻ - ω y|`
    pub residual: f64,
    pub bivalent: bool,
    pub region: TargetRegion,
    pub plus_sources: Vec<usize>,
    pub minus_sources: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseMaps {
    pub records: Vec<InverseRecord>,
    pub anomalies: Vec<Anomaly>,
}

impl InverseMaps {
    pub fn indices_in(&self, region: TargetRegion) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.region == region)
            .map(|r| r.j)
            .collect()
    }

    pub fn region_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &self.records {
            c[r.region as usize] += 1;
        }
        c
    }
}

/// Target-side mirror of [`extract_multimap`] + [`classify_regions`], using the
/// multimap's `merge_tol` and the source points it recorded.
pub fn invert_maps(
    mm: &MultiMap,
    coupling: &Coupling,
    nu: &DiscreteMeasure,
    zero_tol: f64,
) -> Result<InverseMaps> {
    let by_target = coupling.by_target(nu.len());
    let records: Vec<Result<InverseRecord>> = par::map_range(nu.len(), |j| {
        let y = nu.point(j);
        let items: Vec<(usize, &SpherePoint, f64)> = by_target[j]
            .iter()
            .map(|&(i, m)| (i, &mm.records[i].x, m))
            .collect();
        if items.is_empty() {
            return Err(Error::Extraction(format!(
                "target atom {j} receives no mass"
            )));
        }
        let mut clusters = cluster_images(&items, mm.merge_tol)?;
        if clusters.len() > 2 {
            return Err(Error::Extraction(format!(
                "target atom {j} has {} source clusters; the mesh is under-resolved",
                clusters.len()
            )));
        }
        clusters.sort_by(|a, b| y.dot(&b.point).total_cmp(&y.dot(&a.point)));
        let plus = &clusters[0];
        let minus = clusters.last().expect("nonempty");
        let bivalent = clusters.len() == 2;
        let diff: Vec<f64> = plus
            .point
            .coords()
            .iter()
            .zip(minus.point.coords())
            .map(|(a, b)| a - b)
            .collect();
        let omega = crate::linalg::dot(&diff, y.coords());
        let mut r = diff.clone();
        axpy(&mut r, -omega, y.coords());
        let d = y.dot(&plus.point);
        let region = if bivalent {
            TargetRegion::T2
        } else if d > zero_tol {
            TargetRegion::T1
        } else {
            TargetRegion::T0
        };
        Ok(InverseRecord {
            j,
            y: y.clone(),
            s_plus: plus.point.clone(),
            s_minus: minus.point.clone(),
            omega,
            residual: norm(&r),
            bivalent,
            region,
            plus_sources: plus.members.clone(),
            minus_sources: if bivalent {
                minus.members.clone()
            } else {
                plus.members.clone()
            },
        })
    });
    let records: Vec<InverseRecord> = records.into_iter().collect::<Result<_>>()?;
    let mut anomalies = Vec::new();
    for r in &records {
        let d = r.y.dot(&r.s_plus);
        if r.bivalent && !(d > 0.0 && r.y.dot(&r.s_minus) < 0.0) {
            anomalies.push(Anomaly {
                index: r.j,
                reason: format!(
                    "bivalent target with y·s⁺ = {d:.3e}, y·s⁻ = {:.3e}",
                    r.y.dot(&r.s_minus)
                ),
            });
        } else if !r.bivalent && d < -zero_tol {
            anomalies.push(Anomaly {
                index: r.j,
                reason: format!("univalent target with y·s⁺ = {d:.3e} < -zero_tol"),
            });
        }
    }
    Ok(InverseMaps { records, anomalies })
}

/// Sub-measure of ν given as a full-length weight vector (zeros outside).
#[derive(Clone, Debug, PartialEq)]
pub struct Restriction {
    pub weights: Vec<f64>,
    pub mass: f64,
}

impl Restriction {
    pub fn indices(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.mass == 0.0
    }

    /// The restriction rescaled to a probability measure on its support.
    pub fn normalized(&self, nu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let idx = self.indices();
        if idx.is_empty() {
            return Err(Error::InsufficientData("empty restriction".into()));
        }
        DiscreteMeasure::new(
            nu.n(),
            idx.iter().map(|&j| nu.point(j).clone()).collect(),
            idx.iter().map(|&j| self.weights[j] / self.mass).collect(),
            idx.iter().map(|&j| nu.cell_areas()[j]).collect(),
        )
    }
}

/// Target atoms hit by `t⁻` from bivalent sources.
pub fn minus_image_of_s2(mm: &MultiMap) -> BTreeSet<usize> {
    mm.records
        .iter()
        .filter(|r| r.region == Some(Region::S2))
        .flat_map(|r| r.minus_targets.iter().copied())
        .collect()
}

/// `ν₁` = ν off `t⁻(S₂)`, and the remainder; masses are not renormalized.
pub fn nu1_split(mm: &MultiMap, nu: &DiscreteMeasure) -> (Restriction, Restriction) {
    let hit = minus_image_of_s2(mm);
    let mut w1 = nu.weights().to_vec();
    let mut w2 = vec![0.0; nu.len()];
    for &j in &hit {
        w2[j] = w1[j];
        w1[j] = 0.0;
    }
    let m1 = w1.iter().sum();
    let m2 = w2.iter().sum();
    (
        Restriction {
            weights: w1,
            mass: m1,
        },
        Restriction {
            weights: w2,
            mass: m2,
        },
    )
}

/// Where `t⁺` of the bivalent sources lands on the target side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlusImageReport {
    pub checked: usize,
    /// S2 sources whose nearest target atom to `t⁺` is in T2.
    pub nearest_in_t2: Vec<usize>,
    /// S2 sources with any atom of the `t⁺` cluster in T2.
    pub any_in_t2: Vec<usize>,
}

impl PlusImageReport {
    pub fn ok(&self) -> bool {
        self.nearest_in_t2.is_empty()
    }
}

pub fn plus_image_regions(
    mm: &MultiMap,
    inv: &InverseMaps,
    nu: &DiscreteMeasure,
) -> PlusImageReport {
    let mut report = PlusImageReport {
        checked: 0,
        nearest_in_t2: Vec::new(),
        any_in_t2: Vec::new(),
    };
    for r in mm.records.iter().filter(|r| r.region == Some(Region::S2)) {
        report.checked += 1;
        let nearest = (0..nu.len())
            .max_by(|&a, &b| {
                r.t_plus
                    .dot(nu.point(a))
                    .total_cmp(&r.t_plus.dot(nu.point(b)))
            })
            .expect("ν is nonempty");
        if inv.records[nearest].region == TargetRegion::T2 {
            report.nearest_in_t2.push(r.i);
        }
        if r.plus_targets
            .iter()
            .any(|&j| inv.records[j].region == TargetRegion::T2)
        {
            report.any_in_t2.push(r.i);
        }
    }
    report
}

/// `min (x_i - x_k)·(y_j - y_l)` over pairs of support entries; nonnegative
/// for plans supported on the graph of a monotone map.
pub fn support_monotonicity(
    coupling: &Coupling,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> f64 {
    let e = &coupling.entries;
    par::min_range(e.len(), |a| {
        let (x0, y0) = (mu.point(e[a].i).coords(), nu.point(e[a].j).coords());
        let mut worst = f64::INFINITY;
        for eb in &e[a + 1..] {
            let (x1, y1) = (mu.point(eb.i).coords(), nu.point(eb.j).coords());
            let v: f64 = (0..x0.len())
                .map(|k| (x0[k] - x1[k]) * (y0[k] - y1[k]))
                .sum();
            worst = worst.min(v);
        }
        worst
    })
}

/// Largest distance between two images merged into the same cluster.
pub fn max_cluster_diameter(mm: &MultiMap, nu: &DiscreteMeasure) -> f64 {
    mm.records
        .iter()
        .flat_map(|r| [&r.plus_targets, &r.minus_targets])
        .map(|members| {
            let mut d: f64 = 0.0;
            for (a, &j) in members.iter().enumerate() {
                for &l in &members[a + 1..] {
                    d = d.max(dist(nu.point(j).coords(), nu.point(l).coords()));
                }
            }
            d
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_exact, CouplingEntry, TransportProblem};
    use approx::assert_abs_diff_eq;

    fn pt(v: &[f64]) -> SpherePoint {
        SpherePoint::new(v.to_vec()).unwrap()
    }

    fn measure(points: Vec<SpherePoint>, weights: Vec<f64>) -> DiscreteMeasure {
        let n = points[0].sphere_dim();
        let k = points.len();
        DiscreteMeasure::new(n, points, weights, vec![1.0; k]).unwrap()
    }

    fn coupling(
        entries: &[(usize, usize, f64)],
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
    ) -> Coupling {
        let p = TransportProblem::from_measures(mu, nu).unwrap();
        Coupling::from_entries(
            entries
                .iter()
                .map(|&(i, j, mass)| CouplingEntry { i, j, mass })
                .collect(),
            &p,
        )
    }

    /// x = north pole split between (0.6, 0, ±0.8).
    fn split() -> (DiscreteMeasure, DiscreteMeasure, Coupling) {
        let mu = measure(vec![pt(&[0.0, 0.0, 1.0])], vec![1.0]);
        let nu = measure(
            vec![pt(&[0.6, 0.0, 0.8]), pt(&[0.6, 0.0, -0.8])],
            vec![0.5, 0.5],
        );
        let c = coupling(&[(0, 0, 0.5), (0, 1, 0.5)], &mu, &nu);
        (mu, nu, c)
    }

    #[test]
    fn split_example() {
        let (mu, nu, c) = split();
        let mm = classify_regions(extract_multimap(&c, &mu, &nu, 1e-6).unwrap(), 1e-3);
        let r = &mm.records[0];
        assert_eq!(r.t_plus, pt(&[0.6, 0.0, 0.8]));
        assert_eq!(r.t_minus, pt(&[0.6, 0.0, -0.8]));
        assert_abs_diff_eq!(r.lambda, 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(r.collinearity_residual, 0.0, epsilon = 1e-15);
        assert_eq!(r.region, Some(Region::S2));
        assert!(mm.anomalies.is_empty());

        let imgs = support_images(&c, &mu, &nu, 0);
        assert_eq!(imgs.len(), 2);
        assert_abs_diff_eq!(imgs.iter().map(|p| p.1).sum::<f64>(), 1.0);
        assert_eq!(imgs[0].0, pt(&[0.6, 0.0, 0.8]));

        let (nu1, rest) = nu1_split(&mm, &nu);
        assert_eq!(nu1.indices(), vec![0]);
        assert_eq!(rest.indices(), vec![1]);
        for j in 0..2 {
            assert_eq!(nu1.weights[j] + rest.weights[j], nu.weight(j));
        }
    }

    #[test]
    fn mirrored_split_on_target_side() {
        let mu = measure(
            vec![pt(&[0.6, 0.0, 0.8]), pt(&[0.6, 0.0, -0.8])],
            vec![0.5, 0.5],
        );
        let nu = measure(vec![pt(&[0.0, 0.0, 1.0])], vec![1.0]);
        let c = coupling(&[(0, 0, 0.5), (1, 0, 0.5)], &mu, &nu);
        let mm = classify_regions(extract_multimap(&c, &mu, &nu, 1e-6).unwrap(), 1e-3);
        let inv = invert_maps(&mm, &c, &nu, 1e-3).unwrap();
        let r = &inv.records[0];
        assert_abs_diff_eq!(r.omega, 1.6, epsilon = 1e-15);
        assert_eq!(r.region, TargetRegion::T2);
        assert_eq!(r.plus_sources, vec![0]);
        assert_eq!(r.minus_sources, vec![1]);
    }

    #[test]
    fn univalent_cases() {
        let x = pt(&[0.0, 0.0, 1.0]);
        let mu = measure(vec![x.clone()], vec![1.0]);
        let nu = measure(vec![x.clone()], vec![1.0]);
        let c = coupling(&[(0, 0, 1.0)], &mu, &nu);
        let mm = classify_regions(extract_multimap(&c, &mu, &nu, 1e-6).unwrap(), 1e-3);
        assert_eq!(mm.records[0].t_plus, mm.records[0].t_minus);
        assert_eq!(mm.records[0].lambda, 0.0);
        assert_eq!(mm.records[0].region, Some(Region::S1));

        let nu = measure(vec![pt(&[1.0, 0.0, 0.0])], vec![1.0]);
        let c = coupling(&[(0, 0, 1.0)], &mu, &nu);
        let mm = classify_regions(extract_multimap(&c, &mu, &nu, 1e-6).unwrap(), 1e-3);
        assert_eq!(mm.records[0].region, Some(Region::S0));

        let (nu1, rest) = nu1_split(&mm, &nu);
        assert_eq!(nu1.mass, 1.0);
        assert!(rest.is_empty());
    }

    #[test]
    fn close_images_merge() {
        let mu = measure(vec![pt(&[0.0, 0.0, 1.0])], vec![1.0]);
        let a = SpherePoint::normalized(vec![0.6, 0.0, 0.8]).unwrap();
        let b = SpherePoint::normalized(vec![0.6, 1e-9, 0.8]).unwrap();
        let nu = measure(vec![a, b], vec![0.5, 0.5]);
        let c = coupling(&[(0, 0, 0.5), (0, 1, 0.5)], &mu, &nu);
        let mm = extract_multimap(&c, &mu, &nu, 1e-6).unwrap();
        assert!(!mm.records[0].bivalent);
        assert_eq!(mm.records[0].plus_targets, vec![0, 1]);
    }

    #[test]
    fn three_clusters_is_an_error() {
        let mu = measure(vec![pt(&[0.0, 0.0, 1.0])], vec![1.0]);
        let nu = measure(
            vec![
                pt(&[1.0, 0.0, 0.0]),
                pt(&[0.0, 1.0, 0.0]),
                pt(&[-1.0, 0.0, 0.0]),
            ],
            vec![0.25, 0.25, 0.5],
        );
        let c = coupling(&[(0, 0, 0.25), (0, 1, 0.25), (0, 2, 0.5)], &mu, &nu);
        assert!(matches!(
            extract_multimap(&c, &mu, &nu, 1e-3),
            Err(Error::Extraction(_))
        ));
    }

    #[test]
    fn identity_plan_inverts_to_t1() {
        let mesh = crate::measure::quasi_uniform_mesh(2, 50, 0).unwrap();
        let mu = DiscreteMeasure::uniform(&mesh);
        let (c, _) = solve_exact(&mu, &mu).unwrap();
        let tol = 2.0 * mu.spacing();
        let mm = classify_regions(extract_multimap(&c, &mu, &mu, tol).unwrap(), mu.spacing());
        assert_eq!(mm.region_counts(), [0, 50, 0]);
        let inv = invert_maps(&mm, &c, &mu, mu.spacing()).unwrap();
        assert_eq!(inv.region_counts(), [0, 50, 0]);
        for r in &inv.records {
            assert_eq!(r.s_plus, r.s_minus);
            assert_eq!(r.omega, 0.0);
        }
        assert!(support_monotonicity(&c, &mu, &mu) > 0.0);
    }

    #[test]
    fn json_records_have_the_export_fields() {
        let (mu, nu, c) = split();
        let mm = classify_regions(extract_multimap(&c, &mu, &nu, 1e-6).unwrap(), 1e-3);
        let v = serde_json::to_value(mm.to_json_records()).unwrap();
        let rec = &v[0];
        for key in ["i", "t_plus", "t_minus", "lambda", "residual", "region"] {
            assert!(rec.get(key).is_some(), "missing {key}");
        }
        assert_eq!(rec["region"], "S2");
    }
}
