//! Numerical checks of the structural conditions on `c(x, y) = |x - y|^2`
//! restricted to `N = {x·y > 0}`: twist, nondegeneracy, positive cross-curvature
//! on null pairs, and the convexity of `Dc(x, N̂(x))` in the chart at `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::{
    cross_derivative_frame, cross_derivative_frame_richardson, grad_cost_local, Chart, LocalCoords,
    SpherePoint, DEFAULT_FD_STEP, N_GUARD,
};
use crate::linalg::{axpy, dist, dot, norm};
use crate::par;

/// Default step for the fourth-difference stencil.
pub const CROSS_CURVATURE_STEP: f64 = 1e-3;
/// Cross-curvature is evaluated only where `x·y` exceeds this.
pub const INTERIOR_MARGIN: f64 = 0.1;
/// `|<p, D̄Dc p̄>|` below this makes `(p, p̄)` a null pair.
pub const NULL_TOL: f64 = 1e-8;
/// Tolerance on the linearity of `Dc` at the bi-convexity witness.
pub const WITNESS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Twist,
    Nondegeneracy,
    CrossCurvature,
    Biconvexity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub sample_count: usize,
    /// Smallest signed slack observed.
    pub min_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub worst_pair: (SpherePoint, SpherePoint),
    pub columns: Vec<String>,
    pub table: Vec<Vec<f64>>,
}

impl ConditionReport {
    fn new(
        condition: Condition,
        min_margin: f64,
        tolerance: f64,
        worst_pair: (SpherePoint, SpherePoint),
        columns: &[&str],
        table: Vec<Vec<f64>>,
    ) -> Self {
        ConditionReport {
            condition,
            sample_count: table.len(),
            min_margin,
            tolerance,
            pass: min_margin > -tolerance,
            worst_pair,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            table,
        }
    }
}

/// `-Dc(x, y)` with respect to the chart coordinates at `x`, evaluated at `x`.
pub fn twist_image(chart: &Chart, y: &SpherePoint) -> Result<Vec<f64>> {
    let yl = chart.project(y)?;
    let g = grad_cost_local(&LocalCoords::zeros(chart.dim()), &yl)?;
    Ok(g.into_iter().map(|v| -v).collect())
}

/// Injectivity of `y ↦ -Dc(x, y)`: the smallest image distance divided by the
/// smallest chart distance of the preimages. Duplicate samples give 0.
pub fn twist_margin(x: &SpherePoint, ys: &[SpherePoint]) -> Result<ConditionReport> {
    if ys.len() < 2 {
        return Err(Error::InsufficientData("twist needs two samples".into()));
    }
    let chart = Chart::at(x);
    let pre: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| chart.project(y).map(|l| l.0))
        .collect::<Result<_>>()?;
    let img: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| twist_image(&chart, y))
        .collect::<Result<_>>()?;
    let mut min_pre = f64::INFINITY;
    let mut min_img = f64::INFINITY;
    let mut worst = (0, 1);
    for a in 0..ys.len() {
        for b in a + 1..ys.len() {
            let dp = dist(&pre[a], &pre[b]);
            let di = dist(&img[a], &img[b]);
            if di < min_img {
                min_img = di;
                worst = (a, b);
            }
            min_pre = min_pre.min(dp);
        }
    }
    let ratio = if min_pre == 0.0 {
        0.0
    } else {
        min_img / min_pre
    };
    let table = pre
        .iter()
        .zip(&img)
        .map(|(p, i)| p.iter().chain(i).copied().collect())
        .collect();
    let n = chart.dim();
    let cols: Vec<String> = (0..n)
        .map(|k| format!("Y{k}"))
        .chain((0..n).map(|k| format!("image{k}")))
        .collect();
    let cols: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    Ok(ConditionReport::new(
        Condition::Twist,
        ratio,
        0.0,
        (ys[worst.0].clone(), ys[worst.1].clone()),
        &cols,
        table,
    ))
}

/// `(x·y, |det D̄Dc(x, y)|)` for `y` at each geodesic angle from `x` along the
/// first chart direction.
pub fn nondegeneracy_profile(x: &SpherePoint, angles: &[f64]) -> Result<Vec<(f64, f64)>> {
    let chart = Chart::at(x);
    let dir = chart.frame()[0].clone();
    angles
        .iter()
        .map(|&a| {
            if !(a > 0.0 && a < std::f64::consts::FRAC_PI_2) {
                return Err(domain(format!("angle {a} is not in (0, π/2)")));
            }
            let y = x.geodesic(&dir, a);
            let m = cross_derivative_frame_richardson(x, &y, DEFAULT_FD_STEP)?;
            Ok((x.dot(&y), m.determinant().abs()))
        })
        .collect()
}

/// `min |det D̄Dc|` over the given pairs.
pub fn nondegeneracy_margin(pairs: &[(SpherePoint, SpherePoint)]) -> Result<ConditionReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pairs".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = par::map_slice(pairs, |(x, y)| {
        let m = cross_derivative_frame_richardson(x, y, DEFAULT_FD_STEP)?;
        Ok(vec![x.dot(y), m.determinant().abs()])
    });
    let table: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let (k, min) = table
        .iter()
        .enumerate()
        .map(|(k, r)| (k, r[1]))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(ConditionReport::new(
        Condition::Nondegeneracy,
        min,
        0.0,
        pairs[k].clone(),
        &["x_dot_y", "abs_det"],
        table,
    ))
}

fn check_tangent(base: &SpherePoint, v: &[f64], what: &str) -> Result<()> {
    if v.len() != base.ambient_dim() {
        return Err(domain(format!("{what} has the wrong dimension")));
    }
    if dot(v, base.coords()).abs() > 1e-9 * (1.0 + norm(v)) {
        return Err(domain(format!("{what} is not tangent")));
    }
    Ok(())
}

/// `-∂²_s ∂²_t c(x(s), y(t))` at `s = t = 0`, where `x(s)` runs along the line
/// through `x` with velocity `p` in the chart at `y`, and `y(t)` along the line
/// through `y` with velocity `p̄` in the chart at `x`. Computed with the
/// `(1, -2, 1) ⊗ (1, -2, 1) / h^4` stencil.
pub fn cross_curvature(
    x: &SpherePoint,
    y: &SpherePoint,
    p: &[f64],
    pbar: &[f64],
    h: f64,
) -> Result<f64> {
    let xy = x.dot(y);
    if !(xy > INTERIOR_MARGIN) {
        return Err(domain(format!(
            "cross-curvature needs x·y > {INTERIOR_MARGIN} (got {xy:.3e})"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(domain("finite-difference step must be positive"));
    }
    check_tangent(x, p, "p")?;
    check_tangent(y, pbar, "p̄")?;
    if norm(p) == 0.0 || norm(pbar) == 0.0 {
        return Ok(0.0);
    }
    let cx = Chart::at(x);
    let cy = Chart::at(y);
    let x0 = cy.project(x)?.0;
    let y0 = cx.project(y)?.0;
    let r = cy.tangent_coords(p);
    let q = cx.tangent_coords(pbar);
    let line = |chart: &Chart, base: &[f64], dir: &[f64], s: f64| -> Result<SpherePoint> {
        let mut v = base.to_vec();
        axpy(&mut v, s, dir);
        chart.lift(&LocalCoords(v))
    };
    let xs = [
        line(&cy, &x0, &r, -h)?,
        line(&cy, &x0, &r, 0.0)?,
        line(&cy, &x0, &r, h)?,
    ];
    let ys = [
        line(&cx, &y0, &q, -h)?,
        line(&cx, &y0, &q, 0.0)?,
        line(&cx, &y0, &q, h)?,
    ];
    // the stencil of -2x·y factors into second differences of each curve
    let second = |v: &[SpherePoint; 3]| -> Vec<f64> {
        (0..v[0].ambient_dim())
            .map(|k| (v[0].coords()[k] - v[1].coords()[k]) + (v[2].coords()[k] - v[1].coords()[k]))
            .collect()
    };
    let acc = -2.0 * dot(&second(&xs), &second(&ys));
    Ok(-acc / h.powi(4))
}

/// `<p, D̄Dc p̄>` with the matrix in the chart frames at `x` and `y`.
pub fn pairing(x: &SpherePoint, y: &SpherePoint, p: &[f64], pbar: &[f64]) -> Result<f64> {
    let m = cross_derivative_frame_richardson(x, y, DEFAULT_FD_STEP)?;
    let a = Chart::at(x).tangent_coords(p);
    let b = Chart::at(y).tangent_coords(pbar);
    let mb = &m * nalgebra::DVector::from_vec(b);
    Ok(dot(&a, mb.as_slice()))
}

/// [`cross_curvature`] after confirming that `(p, p̄)` is a null pair.
pub fn null_cross_curvature(
    x: &SpherePoint,
    y: &SpherePoint,
    p: &[f64],
    pbar: &[f64],
    h: f64,
) -> Result<f64> {
    let v = pairing(x, y, p, pbar)?;
    if v.abs() > NULL_TOL {
        return Err(Error::Nullity(v));
    }
    cross_curvature(x, y, p, pbar, h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullPair {
    pub x: SpherePoint,
    pub y: SpherePoint,
    pub p: Vec<f64>,
    pub pbar: Vec<f64>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-6 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// Random `(x, y)` with `x·y >= min_xy`, a random unit tangent `p` at `x`, and
/// a unit tangent `p̄` at `y` in the kernel of `p ↦ <p, D̄Dc ·>`.
pub fn sample_null_pairs(n: usize, count: usize, min_xy: f64, seed: u64) -> Result<Vec<NullPair>> {
    if n < 2 {
        return Err(config("null pairs need sphere dimension n >= 2"));
    }
    if !(min_xy > N_GUARD && min_xy < 1.0) {
        return Err(config("min_xy must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
        let y = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
        if x.dot(&y) < min_xy {
            continue;
        }
        let cx = Chart::at(&x);
        let cy = Chart::at(&y);
        let a = random_unit(&mut rng, n);
        let p = cx.tangent_vector(&a);
        let m = cross_derivative_frame_richardson(&x, &y, DEFAULT_FD_STEP)?;
        // p̄ ⟂ Mᵀa in the frame at y
        let w = m.transpose() * nalgebra::DVector::from_column_slice(&a);
        let w = w.as_slice();
        let mut z = random_unit(&mut rng, n);
        let c = dot(&z, w) / dot(w, w);
        axpy(&mut z, -c, w);
        let zn = norm(&z);
        if zn < 1e-6 {
            continue;
        }
        z.iter_mut().for_each(|v| *v /= zn);
        out.push(NullPair {
            x,
            y,
            pbar: cy.tangent_vector(&z),
            p,
        });
    }
    Ok(out)
}

/// Minimum cross-curvature over null pairs; rows are `(x·y, pairing, value)`.
pub fn cross_curvature_margin(pairs: &[NullPair], h: f64) -> Result<ConditionReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no null pairs".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = par::map_slice(pairs, |np| {
        let v = null_cross_curvature(&np.x, &np.y, &np.p, &np.pbar, h)?;
        Ok(vec![
            np.x.dot(&np.y),
            pairing(&np.x, &np.y, &np.p, &np.pbar)?,
            v,
        ])
    });
    let table: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let (k, min) = table
        .iter()
        .enumerate()
        .map(|(k, r)| (k, r[2]))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(ConditionReport::new(
        Condition::CrossCurvature,
        min,
        0.0,
        (pairs[k].x.clone(), pairs[k].y.clone()),
        &["x_dot_y", "pairing", "cross_curvature"],
        table,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: SpherePoint,
    /// `|-Dc(x₀, w) - (θ(-Dc(x₀, y₁)) + (1-θ)(-Dc(x₀, y₀)))|`
    pub linearity_error: f64,
}

/// `π_{x₀}^{-1}(θY₁ + (1-θ)Y₀)`, whose `-Dc(x₀, ·)` image is the same convex
/// combination of the images of `y₀` and `y₁`.
pub fn biconvexity_witness(
    x0: &SpherePoint,
    y0: &SpherePoint,
    y1: &SpherePoint,
    theta: f64,
) -> Result<Witness> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(domain(format!("θ = {theta} is not in [0, 1]")));
    }
    let chart = Chart::at(x0);
    let a = chart.project(y0)?.0;
    let b = chart.project(y1)?.0;
    let w: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(u, v)| (1.0 - theta) * u + theta * v)
        .collect();
    let point = chart.lift(&LocalCoords(w))?;
    if point.dot(x0) <= N_GUARD {
        return Err(domain("witness left the chart hemisphere"));
    }
    let img = twist_image(&chart, &point)?;
    let i0 = twist_image(&chart, y0)?;
    let i1 = twist_image(&chart, y1)?;
    let target: Vec<f64> = i0
        .iter()
        .zip(&i1)
        .map(|(u, v)| (1.0 - theta) * u + theta * v)
        .collect();
    Ok(Witness {
        point,
        linearity_error: dist(&img, &target),
    })
}

/// Samples for the witness checks: `(x₀, y₀, y₁, θ)` with both `y` in `N̂(x₀)`.
pub fn sample_witness_inputs(
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(SpherePoint, SpherePoint, SpherePoint, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
        let y0 = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
        let y1 = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
        if x.dot(&y0) <= 0.05 || x.dot(&y1) <= 0.05 {
            continue;
        }
        out.push((x, y0, y1, rng.gen_range(0.0..1.0)));
    }
    Ok(out)
}

/// Worst linearity error of the witnesses; `horizontal` swaps the roles of
/// the two sides (`x₀` plays a target, `y₀`, `y₁` play sources).
pub fn biconvexity_margin(
    inputs: &[(SpherePoint, SpherePoint, SpherePoint, f64)],
    horizontal: bool,
) -> Result<ConditionReport> {
    if inputs.is_empty() {
        return Err(Error::InsufficientData("no witness inputs".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = par::map_slice(inputs, |(x, y0, y1, t)| {
        // the cost is symmetric, so the horizontal check is the same
        // construction with the base point taken on the target side
        let w = biconvexity_witness(x, y0, y1, *t)?;
        Ok(vec![
            *t,
            w.point.dot(x),
            w.linearity_error,
            f64::from(u8::from(horizontal)),
        ])
    });
    let table: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let (k, worst) = table
        .iter()
        .enumerate()
        .map(|(k, r)| (k, r[2]))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Ok(ConditionReport::new(
        Condition::Biconvexity,
        -worst,
        WITNESS_TOL,
        (inputs[k].0.clone(), inputs[k].1.clone()),
        &["theta", "witness_dot_base", "linearity_error", "horizontal"],
        table,
    ))
}

/// Everything the condition suite reports for one sphere dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtwSuite {
    pub n: usize,
    pub twist: ConditionReport,
    pub nondegeneracy: ConditionReport,
    /// `(x·y, |det|)` along a ray, for angles approaching π/2.
    pub profile: Vec<(f64, f64)>,
    pub cross_curvature: Option<ConditionReport>,
    pub biconvex_vertical: ConditionReport,
    pub biconvex_horizontal: ConditionReport,
}

pub const PROFILE_DEGREES: [f64; 7] = [1.0, 10.0, 30.0, 50.0, 70.0, 85.0, 89.9];

/// Runs every check with `samples` random inputs each.
pub fn run_suite(n: usize, samples: usize, seed: u64) -> Result<MtwSuite> {
    if n < 1 {
        return Err(config("sphere dimension must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
    let mut ys = Vec::new();
    while ys.len() < samples.max(2) {
        let y = SpherePoint::normalized(random_unit(&mut rng, n + 1))?;
        if x.dot(&y) > 0.05 {
            ys.push(y);
        }
    }
    let twist = twist_margin(&x, &ys)?;
    let pairs: Vec<(SpherePoint, SpherePoint)> =
        ys.iter().map(|y| (x.clone(), y.clone())).collect();
    let nondegeneracy = nondegeneracy_margin(&pairs)?;
    let angles: Vec<f64> = PROFILE_DEGREES.iter().map(|d| d.to_radians()).collect();
    let profile = nondegeneracy_profile(&x, &angles)?;
    let cross_curvature = if n >= 2 {
        let nulls = sample_null_pairs(n, samples, 0.3, seed.wrapping_add(1))?;
        Some(cross_curvature_margin(&nulls, CROSS_CURVATURE_STEP)?)
    } else {
        None
    };
    let inputs = sample_witness_inputs(n, samples, seed.wrapping_add(2))?;
    let biconvex_vertical = biconvexity_margin(&inputs, false)?;
    let swapped: Vec<_> = sample_witness_inputs(n, samples, seed.wrapping_add(3))?;
    let biconvex_horizontal = biconvexity_margin(&swapped, true)?;
    Ok(MtwSuite {
        n,
        twist,
        nondegeneracy,
        profile,
        cross_curvature,
        biconvex_vertical,
        biconvex_horizontal,
    })
}

/// `|det|` must fall strictly along the profile.
pub fn profile_strictly_decreasing(profile: &[(f64, f64)]) -> bool {
    profile.windows(2).all(|w| w[1].1 < w[0].1)
}

/// Frame matrix `D̄Dc` with the plain central difference, re-exported for reports.
pub fn frame_matrix(x: &SpherePoint, y: &SpherePoint) -> Result<nalgebra::DMatrix<f64>> {
    cross_derivative_frame(x, y, DEFAULT_FD_STEP)
}
