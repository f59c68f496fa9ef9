//! Discrete measures on `S^n`: quasi-uniform meshes, density sampling and the
//! upper/lower density bounds that make a pair suitable.
//!
//! Density bounds are checked on the per-atom estimate `weight / cell_area`,
//! which is what "suitable" means at a given resolution.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::SpherePoint;
use crate::linalg::{axpy, dot, norm};
use crate::par;

/// Mass normalization tolerance.
pub const MASS_TOL: f64 = 1e-10;

/// Hausdorff measure of `S^n`.
pub fn sphere_area(n: usize) -> f64 {
    // |S^0| = 2, |S^1| = 2π, |S^n| = 2π/(n-1) |S^{n-2}|
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * sphere_area(n - 2),
    }
}

/// A point set on `S^n` with one positive cell area per point.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub n: usize,
    pub points: Vec<SpherePoint>,
    pub cell_areas: Vec<f64>,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(total area / count)^(1/n)`, the typical distance between neighbours.
    pub fn spacing(&self) -> f64 {
        mesh_spacing(self.n, &self.cell_areas)
    }

    /// Applies an orthogonal map to every point; areas are unchanged.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Mesh {
        let points = self
            .points
            .iter()
            .map(|p| {
                let v = q * nalgebra::DVector::from_column_slice(p.coords());
                SpherePoint::normalized(v.as_slice().to_vec()).expect("rotation keeps unit norm")
            })
            .collect();
        Mesh {
            n: self.n,
            points,
            cell_areas: self.cell_areas.clone(),
        }
    }
}

fn mesh_spacing(n: usize, areas: &[f64]) -> f64 {
    if areas.is_empty() {
        return 0.0;
    }
    let total: f64 = areas.iter().sum();
    (total / areas.len() as f64).powf(1.0 / n as f64)
}

/// Haar-ish random rotation of `R^dim` from a seeded Gaussian matrix.
pub fn random_rotation(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Deterministic quasi-uniform point set on `S^n`.
///
/// * `n = 1`: equally spaced angles, exact arc-length cells.
/// * `n = 2`: Fibonacci spiral with the equal-area cells `4π/count`.
/// * `n >= 3`: seeded random points relaxed by Riesz repulsion; cells are
///   Monte-Carlo Voronoi estimates normalized to the sphere area.
///
/// A nonzero `seed` rotates the `n = 1, 2` lattices.
pub fn quasi_uniform_mesh(n: usize, count: usize, seed: u64) -> Result<Mesh> {
    if n == 0 {
        return Err(config("sphere dimension n must be >= 1"));
    }
    if count < n + 2 {
        return Err(config(format!(
            "mesh count {count} is below n + 2 = {}",
            n + 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = sphere_area(n);
    let mesh = match n {
        1 => {
            let offset = if seed == 0 {
                0.0
            } else {
                rng.gen_range(0.0..2.0 * PI / count as f64)
            };
            let points = (0..count)
                .map(|k| {
                    let a = offset + 2.0 * PI * k as f64 / count as f64;
                    SpherePoint::normalized(vec![a.cos(), a.sin()]).unwrap()
                })
                .collect();
            Mesh {
                n,
                points,
                cell_areas: vec![area / count as f64; count],
            }
        }
        2 => {
            let golden = PI * (1.0 + 5f64.sqrt());
            let points = (0..count)
                .map(|i| {
                    let t = i as f64 + 0.5;
                    let z = 1.0 - 2.0 * t / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * t;
                    SpherePoint::normalized(vec![r * phi.cos(), r * phi.sin(), z]).unwrap()
                })
                .collect();
            let lattice = Mesh {
                n,
                points,
                cell_areas: vec![area / count as f64; count],
            };
            if seed == 0 {
                lattice
            } else {
                lattice.rotated(&random_rotation(3, &mut rng))
            }
        }
        _ => repulsion_mesh(n, count, &mut rng),
    };
    Ok(mesh)
}

const REPULSION_STEPS: usize = 60;
const VORONOI_SAMPLES_PER_CELL: usize = 128;

fn repulsion_mesh(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Mesh {
    let dim = n + 1;
    let mut pts: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let r = norm(&v);
            v.into_iter().map(|c| c / r).collect()
        })
        .collect();
    let spacing = (sphere_area(n) / count as f64).powf(1.0 / n as f64);
    let s = n as f64; // Riesz exponent
    for step in 0..REPULSION_STEPS {
        let forces: Vec<Vec<f64>> = par::map_range(count, |i| {
            let xi = &pts[i];
            let mut f = vec![0.0; dim];
            for (j, xj) in pts.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
                let r = norm(&d).max(1e-9);
                axpy(&mut f, r.powf(-s - 2.0), &d);
            }
            let c = dot(&f, xi);
            axpy(&mut f, -c, xi);
            f
        });
        let fmax = forces.iter().map(|f| norm(f)).fold(0.0, f64::max);
        if fmax == 0.0 {
            break;
        }
        let eta = 0.3 * spacing * (1.0 - step as f64 / REPULSION_STEPS as f64) / fmax;
        for (x, f) in pts.iter_mut().zip(&forces) {
            axpy(x, eta, f);
            let r = norm(x);
            x.iter_mut().for_each(|c| *c /= r);
        }
    }
    let points: Vec<SpherePoint> = pts
        .into_iter()
        .map(|v| SpherePoint::normalized(v).unwrap())
        .collect();
    let cell_areas = monte_carlo_voronoi_areas(n, &points, VORONOI_SAMPLES_PER_CELL * count, rng);
    Mesh {
        n,
        points,
        cell_areas,
    }
}

/// Cell areas from nearest-atom assignment of uniform samples, with one
/// pseudo-count per cell so every area stays positive.
pub fn monte_carlo_voronoi_areas(
    n: usize,
    points: &[SpherePoint],
    samples: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let dim = n + 1;
    let draws: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let owners = par::map_slice(&draws, |v| {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (k, p) in points.iter().enumerate() {
            let d = dot(v, p.coords());
            if d > best_dot {
                best_dot = d;
                best = k;
            }
        }
        best
    });
    let mut counts = vec![1usize; points.len()];
    for o in owners {
        counts[o] += 1;
    }
    let total = (samples + points.len()) as f64;
    let area = sphere_area(n);
    counts
        .into_iter()
        .map(|c| area * c as f64 / total)
        .collect()
}

/// Weighted atoms on `S^n`, total mass 1.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    n: usize,
    points: Vec<SpherePoint>,
    weights: Vec<f64>,
    cell_areas: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(
        n: usize,
        points: Vec<SpherePoint>,
        weights: Vec<f64>,
        cell_areas: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(config("sphere dimension n must be >= 1"));
        }
        if points.is_empty() {
            return Err(config("a measure needs at least one atom"));
        }
        if points.len() != weights.len() || points.len() != cell_areas.len() {
            return Err(config("points, weights and cell areas differ in length"));
        }
        if let Some(i) = points.iter().position(|p| p.sphere_dim() != n) {
            return Err(config(format!("atom {i} does not live on S^{n}")));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(domain(format!(
                "atom {i} has negative or non-finite weight"
            )));
        }
        if let Some(i) = cell_areas.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(domain(format!("atom {i} has non-positive cell area")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(domain(format!("weights sum to {total}, not 1")));
        }
        Ok(DiscreteMeasure {
            n,
            points,
            weights,
            cell_areas,
        })
    }

    /// Weights proportional to the cell areas.
    pub fn uniform(mesh: &Mesh) -> DiscreteMeasure {
        sample_density(|_| 1.0, mesh).expect("constant density is positive")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SpherePoint {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Per-atom density estimate `weight / cell_area` against `H^n`.
    pub fn density_estimates(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.cell_areas)
            .map(|(w, a)| w / a)
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        mesh_spacing(self.n, &self.cell_areas)
    }

    pub fn to_file(&self) -> MeasureFile {
        MeasureFile {
            n: self.n,
            atoms: self
                .points
                .iter()
                .zip(&self.weights)
                .zip(&self.cell_areas)
                .map(|((p, w), a)| AtomRecord {
                    p: p.coords().to_vec(),
                    w: *w,
                    a: *a,
                })
                .collect(),
        }
    }

    pub fn from_file(file: MeasureFile) -> Result<Self> {
        let mut points = Vec::with_capacity(file.atoms.len());
        let mut weights = Vec::with_capacity(file.atoms.len());
        let mut areas = Vec::with_capacity(file.atoms.len());
        for (i, atom) in file.atoms.into_iter().enumerate() {
            let p = SpherePoint::new(atom.p).map_err(|e| domain(format!("atom {i}: {e}")))?;
            points.push(p);
            weights.push(atom.w);
            areas.push(atom.a);
        }
        DiscreteMeasure::new(file.n, points, weights, areas)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: MeasureFile = serde_json::from_str(&text)?;
        Self::from_file(file)
    }
}

/// On-disk measure: `{"n": int, "atoms": [{"p": [..], "w": float, "a": float}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureFile {
    pub n: usize,
    pub atoms: Vec<AtomRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomRecord {
    pub p: Vec<f64>,
    pub w: f64,
    pub a: f64,
}

/// Discretizes `density` on `mesh`: `w_i ∝ density(p_i) · area_i`.
pub fn sample_density<F>(density: F, mesh: &Mesh) -> Result<DiscreteMeasure>
where
    F: Fn(&SpherePoint) -> f64 + Sync + Send,
{
    let values = par::map_slice(&mesh.points, |p| density(p));
    if let Some(i) = values.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(domain(format!(
            "density is not strictly positive at mesh point {i} ({})",
            values[i]
        )));
    }
    let raw: Vec<f64> = values
        .iter()
        .zip(&mesh.cell_areas)
        .map(|(d, a)| d * a)
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    DiscreteMeasure::new(
        mesh.n,
        mesh.points.clone(),
        weights,
        mesh.cell_areas.clone(),
    )
}

/// Built-in densities. Each has a strictly positive floor, so pairs built
/// from them are suitable for some `ε > 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Density {
    Uniform,
    /// `(1-κ) + κ·max(0, p·e)^m / mean`, a bump at the north pole `e` carrying
    /// a fraction `κ` of the mass.
    Cap {
        kappa: f64,
        exponent: u32,
    },
    /// `(1-κ) + κ·(1 - (p·e)^2)^3 / mean`, mass concentrated near the equator.
    Band {
        kappa: f64,
    },
}

pub const DEFAULT_CAP_EXPONENT: u32 = 6;

/// `E[z^{2k}]` for one coordinate of a uniform point on `S^{d-1}`.
fn even_moment(d: usize, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| {
        acc * (2 * i + 1) as f64 / (d as f64 + 2.0 * i as f64)
    })
}

impl Density {
    pub fn evaluate(&self, p: &SpherePoint) -> f64 {
        let dim = p.ambient_dim();
        let z = p.coords()[dim - 1];
        match *self {
            Density::Uniform => 1.0,
            Density::Cap { kappa, exponent } => {
                // mean of max(0, z)^m over the sphere is half the even moment
                let mean = 0.5 * even_moment(dim, exponent / 2);
                (1.0 - kappa) + kappa * z.max(0.0).powi(exponent as i32) / mean
            }
            Density::Band { kappa } => {
                let mean = 1.0 - 3.0 * even_moment(dim, 1) + 3.0 * even_moment(dim, 2)
                    - even_moment(dim, 3);
                (1.0 - kappa) + kappa * (1.0 - z * z).powi(3) / mean
            }
        }
    }
}

impl FromStr for Density {
    type Err = Error;

    /// `uniform`, `cap:κ`, `cap:κ:m` (even `m`), `band:κ` with `κ ∈ [0, 1)`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let kappa = |t: &str| -> Result<f64> {
            let k: f64 = t
                .parse()
                .map_err(|_| config(format!("bad concentration '{t}' in '{s}'")))?;
            if !(0.0..1.0).contains(&k) {
                return Err(config(format!("concentration must lie in [0, 1), got {k}")));
            }
            Ok(k)
        };
        match parts.as_slice() {
            ["uniform"] => Ok(Density::Uniform),
            ["cap", k] => Ok(Density::Cap {
                kappa: kappa(k)?,
                exponent: DEFAULT_CAP_EXPONENT,
            }),
            ["cap", k, m] => {
                let exponent: u32 = m
                    .parse()
                    .map_err(|_| config(format!("bad cap exponent '{m}'")))?;
                if exponent == 0 || !exponent.is_multiple_of(2) {
                    return Err(config("cap exponent must be a positive even integer"));
                }
                Ok(Density::Cap {
                    kappa: kappa(k)?,
                    exponent,
                })
            }
            ["band", k] => Ok(Density::Band { kappa: kappa(k)? }),
            _ => Err(config(format!("unknown density '{s}'"))),
        }
    }
}

/// Default suitability constant `0.05 / |S^n|`.
pub fn default_epsilon(n: usize) -> f64 {
    0.05 / sphere_area(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Mu,
    Nu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub side: Side,
    pub index: usize,
    pub density: f64,
    /// `true` for a breach of the upper bound `1/ε`, `false` for the lower bound `ε`.
    pub upper: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuitabilityCertificate {
    pub epsilon: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub worst_atoms: Vec<BoundViolation>,
}

impl SuitabilityCertificate {
    pub fn ok(&self) -> bool {
        self.upper_ok && self.lower_ok
    }
}

/// Upper bound `1/ε` on μ's density estimates and lower bound `ε` on ν's;
/// with `symmetric`, both bounds on both measures.
pub fn check_suitable(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    epsilon: f64,
    symmetric: bool,
) -> Result<SuitabilityCertificate> {
    if mu.n() != nu.n() {
        return Err(config("μ and ν live on spheres of different dimension"));
    }
    if !(epsilon > 0.0) {
        return Err(config("ε must be positive"));
    }
    let mut violations = Vec::new();
    let mut scan = |m: &DiscreteMeasure, side: Side, upper: bool| {
        for (index, d) in m.density_estimates().into_iter().enumerate() {
            let bad = if upper {
                d > 1.0 / epsilon
            } else {
                d < epsilon
            };
            if bad {
                violations.push(BoundViolation {
                    side,
                    index,
                    density: d,
                    upper,
                });
            }
        }
    };
    scan(mu, Side::Mu, true);
    scan(nu, Side::Nu, false);
    if symmetric {
        scan(nu, Side::Nu, true);
        scan(mu, Side::Mu, false);
    }
    Ok(SuitabilityCertificate {
        epsilon,
        upper_ok: !violations.iter().any(|v| v.upper),
        lower_ok: !violations.iter().any(|v| !v.upper),
        worst_atoms: violations,
    })
}
