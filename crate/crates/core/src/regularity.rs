//! Empirical regularity diagnostics for the extracted maps: Hölder exponent
//! and constant fits, the constants relating `t⁺` and `t⁻` on bivalent
//! regions, and the geometric inequalities used to control `t⁻`, `s⁻`, `s⁺`.

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::SpherePoint;
use crate::linalg::{angle, dist, dot, norm, origin_segment_distance, scale, sub};
use crate::multimap::{InverseMaps, MapRecord, MultiMap, Region, TargetRegion};
use crate::par;

/// Pairs below this count make a fit low-confidence.
pub const MIN_CONFIDENT_PAIRS: usize = 30;
/// Number of equal-count distance bins in the envelope fit.
pub const ENVELOPE_BINS: usize = 10;
/// Upper end of the default scale window.
pub const DEFAULT_R_MAX: f64 = 0.5;
/// Cap on the raw pairs kept in a report for plotting.
pub const RAW_PAIR_SAMPLE: usize = 2000;
/// Segment samples for the normal-projection check.
pub const SEGMENT_SAMPLES: usize = 100;

/// Lower bound `1/(4n-1)` on the Hölder exponent of the maps on `S^n`.
pub fn holder_exponent_bound(n: usize) -> f64 {
    1.0 / (4.0 * n as f64 - 1.0)
}

/// Pairs `(x₀, x₁)` enter a fit only when `r_min <= |x₁ - x₀| <= r_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub r_min: f64,
    pub r_max: f64,
}

impl ScaleWindow {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min >= 0.0 && r_max > r_min) {
            return Err(config(format!("invalid scale window [{r_min}, {r_max}]")));
        }
        Ok(ScaleWindow { r_min, r_max })
    }

    /// `[2 · spacing, 0.5]`
    pub fn for_spacing(spacing: f64) -> Self {
        ScaleWindow {
            r_min: 2.0 * spacing,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.r_min && r <= self.r_max && r > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub region: String,
    /// `None` when every displacement in the window vanishes.
    pub alpha_hat: Option<f64>,
    #[serde(rename = "C_hat")]
    pub c_hat: Option<f64>,
    pub scale_window: ScaleWindow,
    pub pair_count: usize,
    pub low_confidence: bool,
    pub degenerate: bool,
    /// `(log r, log d)` of the binned maxima the line is fitted to.
    pub envelope: Vec<[f64; 2]>,
    /// Thinned `(log r, log d)` sample of all nondegenerate pairs.
    pub raw_pairs: Vec<[f64; 2]>,
}

/// `(|x₁ - x₀|, |f(x₁) - f(x₀)|)` for every pair of samples inside the window.
pub fn displacement_pairs(
    samples: &[(SpherePoint, SpherePoint)],
    window: ScaleWindow,
) -> Vec<(f64, f64)> {
    let rows: Vec<Vec<(f64, f64)>> = par::map_range(samples.len(), |a| {
        let (x0, f0) = &samples[a];
        samples[a + 1..]
            .iter()
            .filter_map(|(x1, f1)| {
                let r = x0.distance(x1);
                window.contains(r).then(|| (r, f0.distance(f1)))
            })
            .collect()
    });
    rows.into_iter().flatten().collect()
}

/// Fits `log d <= log C + α log r` on the upper envelope of the samples:
/// pairs are sorted by `r` and cut into [`ENVELOPE_BINS`] equal-count bins,
/// the pair with the largest `d` in each bin is kept, and a least-squares
/// line goes through those points.
pub fn holder_fit(
    samples: &[(SpherePoint, SpherePoint)],
    region: &str,
    window: ScaleWindow,
) -> Result<HolderReport> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} sample(s) in region {region}",
            samples.len()
        )));
    }
    holder_fit_pairs(&displacement_pairs(samples, window), region, window)
}

/// [`holder_fit`] on precomputed `(r, d)` pairs. Pairs outside the window are ignored.
pub fn holder_fit_pairs(
    pairs: &[(f64, f64)],
    region: &str,
    window: ScaleWindow,
) -> Result<HolderReport> {
    let in_window: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|(r, _)| window.contains(*r))
        .collect();
    if in_window.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} pair(s) in the scale window for region {region}",
            in_window.len()
        )));
    }
    let pair_count = in_window.len();
    let mut logs: Vec<(f64, f64)> = in_window
        .iter()
        .filter(|(_, d)| *d > 0.0)
        .map(|(r, d)| (r.ln(), d.ln()))
        .collect();
    let mut report = HolderReport {
        region: region.to_string(),
        alpha_hat: None,
        c_hat: None,
        scale_window: window,
        pair_count,
        low_confidence: pair_count < MIN_CONFIDENT_PAIRS,
        degenerate: false,
        envelope: Vec::new(),
        raw_pairs: Vec::new(),
    };
    if logs.is_empty() {
        report.degenerate = true;
        return Ok(report);
    }
    if logs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "a single nonzero displacement in region {region}"
        )));
    }
    logs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let bins = ENVELOPE_BINS.min(logs.len());
    let (base, extra) = (logs.len() / bins, logs.len() % bins);
    let mut start = 0;
    for b in 0..bins {
        let len = base + usize::from(b < extra);
        let chunk = &logs[start..start + len];
        let best = chunk
            .iter()
            .max_by(|p, q| p.1.total_cmp(&q.1))
            .expect("bins are nonempty");
        report.envelope.push([best.0, best.1]);
        start += len;
    }
    let (slope, intercept) = least_squares(&report.envelope).ok_or_else(|| {
        Error::InsufficientData(format!("all pair distances coincide in region {region}"))
    })?;
    report.alpha_hat = Some(slope);
    report.c_hat = Some(intercept.exp());

    let stride = logs.len().div_ceil(RAW_PAIR_SAMPLE).max(1);
    report.raw_pairs = logs.iter().step_by(stride).map(|p| [p.0, p.1]).collect();
    Ok(report)
}

fn least_squares(points: &[[f64; 2]]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p[0] - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Smallest `C` with `d <= C r^exponent` on every window pair, and the pair count.
pub fn holder_constant(
    samples: &[(SpherePoint, SpherePoint)],
    exponent: f64,
    window: ScaleWindow,
) -> Result<(f64, usize)> {
    let pairs = displacement_pairs(samples, window);
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no pairs in the scale window".into(),
        ));
    }
    let c = pairs
        .iter()
        .map(|(r, d)| d / r.powf(exponent))
        .fold(0.0, f64::max);
    Ok((c, pairs.len()))
}

/// `(x, t⁺(x))` for records passing `keep`.
pub fn plus_samples(
    mm: &MultiMap,
    keep: impl Fn(&MapRecord) -> bool,
) -> Vec<(SpherePoint, SpherePoint)> {
    mm.records
        .iter()
        .filter(|r| keep(r))
        .map(|r| (r.x.clone(), r.t_plus.clone()))
        .collect()
}

/// `(x, t⁻(x))` for records passing `keep`.
pub fn minus_samples(
    mm: &MultiMap,
    keep: impl Fn(&MapRecord) -> bool,
) -> Vec<(SpherePoint, SpherePoint)> {
    mm.records
        .iter()
        .filter(|r| keep(r))
        .map(|r| (r.x.clone(), r.t_minus.clone()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionConstants {
    /// `min -x·t⁻(x)` over the region.
    pub k_u: f64,
    /// `min -x·t⁺(x)`; negative on bivalent atoms, reported for comparison only.
    pub k_u_plus_form: f64,
    /// Hölder constant of `t⁺` at the exponent `1/(4n-1)`.
    #[serde(rename = "C_plus")]
    pub c_plus: f64,
    /// `(1 + 1/k)(C⁺ + 2)`
    #[serde(rename = "C_minus_statement")]
    pub c_minus_statement: f64,
    /// `(1 + 2/k)(C⁺ + 2)`
    #[serde(rename = "C_minus_proof")]
    pub c_minus_proof: f64,
    pub exponent: f64,
}

impl RegionConstants {
    pub fn from_parts(k_u: f64, c_plus: f64) -> RegionConstants {
        RegionConstants {
            k_u,
            k_u_plus_form: f64::NAN,
            c_plus,
            c_minus_statement: (1.0 + 1.0 / k_u) * (c_plus + 2.0),
            c_minus_proof: (1.0 + 2.0 / k_u) * (c_plus + 2.0),
            exponent: f64::NAN,
        }
    }
}

fn region_records<'a>(mm: &'a MultiMap, subset: &[usize]) -> Result<Vec<&'a MapRecord>> {
    if subset.is_empty() {
        return Err(Error::InsufficientData("empty atom subset".into()));
    }
    subset
        .iter()
        .map(|&i| {
            let r = mm
                .records
                .get(i)
                .ok_or_else(|| config(format!("atom {i} out of range")))?;
            if !r.bivalent {
                return Err(domain(format!("atom {i} is not bivalent")));
            }
            Ok(r)
        })
        .collect()
}

/// `k_U`, `C⁺_U` and both forms of `C⁻_U` on a subset of bivalent atoms.
pub fn region_constants(
    mm: &MultiMap,
    subset: &[usize],
    window: ScaleWindow,
) -> Result<RegionConstants> {
    let recs = region_records(mm, subset)?;
    let n = recs[0].x.sphere_dim();
    let k_u = recs
        .iter()
        .map(|r| -r.x_dot_minus())
        .fold(f64::INFINITY, f64::min);
    if !(k_u > 0.0) {
        return Err(domain(format!(
            "min -x·t⁻ = {k_u:.3e} is not positive on the region"
        )));
    }
    let k_plus = recs
        .iter()
        .map(|r| -r.x_dot_plus())
        .fold(f64::INFINITY, f64::min);
    let exponent = holder_exponent_bound(n);
    let samples: Vec<_> = recs
        .iter()
        .map(|r| (r.x.clone(), r.t_plus.clone()))
        .collect();
    let (c_plus, _) = holder_constant(&samples, exponent, window)?;
    let mut rc = RegionConstants::from_parts(k_u, c_plus);
    rc.k_u_plus_form = k_plus;
    rc.exponent = exponent;
    Ok(rc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `max |Δt| / (C |Δx|^e)`; at most 1 when the bound holds.
    pub max_ratio: f64,
    pub constant: f64,
    pub pair_count: usize,
    pub worst_pair: (usize, usize),
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

fn bound_check(
    recs: &[&MapRecord],
    image: impl Fn(&MapRecord) -> &SpherePoint + Sync,
    constant: f64,
    exponent: f64,
    window: ScaleWindow,
) -> Result<BoundCheck> {
    let rows: Vec<(f64, usize, (usize, usize))> = par::map_range(recs.len(), |a| {
        let mut best = (0.0, 0, (recs[a].i, recs[a].i));
        for b in &recs[a + 1..] {
            let r = recs[a].x.distance(&b.x);
            if !window.contains(r) {
                continue;
            }
            let ratio = image(recs[a]).distance(image(b)) / (constant * r.powf(exponent));
            best.1 += 1;
            if ratio > best.0 {
                best.0 = ratio;
                best.2 = (recs[a].i, b.i);
            }
        }
        best
    });
    let pair_count = rows.iter().map(|r| r.1).sum();
    if pair_count == 0 {
        return Err(Error::InsufficientData(
            "no pairs in the scale window".into(),
        ));
    }
    let (max_ratio, _, worst_pair) =
        rows.into_iter()
            .fold((0.0, 0, (0, 0)), |acc, r| if r.0 > acc.0 { r } else { acc });
    Ok(BoundCheck {
        max_ratio,
        constant,
        pair_count,
        worst_pair,
    })
}

/// `|t⁻(x₁) - t⁻(x₀)| <= C⁻_U |x₁ - x₀|^{1/(4n-1)}` with the proof-form constant.
pub fn t_minus_bound_check(
    mm: &MultiMap,
    subset: &[usize],
    window: ScaleWindow,
    constants: &RegionConstants,
) -> Result<BoundCheck> {
    t_minus_bound_check_with(mm, subset, window, constants.c_minus_proof)
}

/// [`t_minus_bound_check`] against an explicit constant.
pub fn t_minus_bound_check_with(
    mm: &MultiMap,
    subset: &[usize],
    window: ScaleWindow,
    constant: f64,
) -> Result<BoundCheck> {
    let recs = region_records(mm, subset)?;
    let e = holder_exponent_bound(recs[0].x.sphere_dim());
    bound_check(&recs, |r| &r.t_minus, constant, e, window)
}

/// The same bound with the roles of `t⁺` and `t⁻` exchanged:
/// `k' = min x·t⁺`, `C⁻` fitted on `t⁻`, and `t⁺` checked against
/// `(1 + 2/k')(C⁻ + 2)`.
pub fn converse_bound_check(
    mm: &MultiMap,
    subset: &[usize],
    window: ScaleWindow,
) -> Result<BoundCheck> {
    let recs = region_records(mm, subset)?;
    let e = holder_exponent_bound(recs[0].x.sphere_dim());
    let k = recs
        .iter()
        .map(|r| r.x_dot_plus())
        .fold(f64::INFINITY, f64::min);
    if !(k > 0.0) {
        return Err(domain(format!(
            "min x·t⁺ = {k:.3e} is not positive on the region"
        )));
    }
    let samples: Vec<_> = recs
        .iter()
        .map(|r| (r.x.clone(), r.t_minus.clone()))
        .collect();
    let (c_minus, _) = holder_constant(&samples, e, window)?;
    let constant = (1.0 + 2.0 / k) * (c_minus + 2.0);
    bound_check(&recs, |r| &r.t_plus, constant, e, window)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentNormal {
    /// `min_u min_i x_i·∇h(u)` over the sampled segment, `∇h(u) = -u/|u|`.
    pub min_projection: f64,
    pub pass: bool,
}

/// Samples `u` on `[t⁻(x₀), t⁻(x₁)]` and checks `x_i·∇h(u) >= k_U / 2` up to round-off.
pub fn segment_normal_check(
    mm: &MultiMap,
    x0: usize,
    x1: usize,
    k_u: f64,
) -> Result<SegmentNormal> {
    let recs = region_records(mm, &[x0, x1])?;
    if recs.iter().any(|r| r.region != Some(Region::S2)) {
        return Err(domain("segment check needs two S2 atoms"));
    }
    let (a, b) = (recs[0].t_minus.coords(), recs[1].t_minus.coords());
    if origin_segment_distance(a, b) <= 1e-9 {
        return Err(domain(
            "the segment between the t⁻ images passes through the origin",
        ));
    }
    let mut min_projection = f64::INFINITY;
    for s in 0..SEGMENT_SAMPLES {
        let t = s as f64 / (SEGMENT_SAMPLES - 1) as f64;
        let u: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(p, q)| (1.0 - t) * p + t * q)
            .collect();
        let grad = scale(&u, -1.0 / norm(&u));
        for r in &recs {
            min_projection = min_projection.min(dot(r.x.coords(), &grad));
        }
    }
    Ok(SegmentNormal {
        min_projection,
        // slack for the round-off of interpolating and renormalizing u
        pass: min_projection >= 0.5 * k_u - 1e-12,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSweep {
    pub pairs_checked: usize,
    pub failures: usize,
    pub min_projection: f64,
}

/// [`segment_normal_check`] over all pairs of the subset with
/// `|t⁻(x₁) - t⁻(x₀)|² < k_U / 2`.
pub fn segment_normal_sweep(mm: &MultiMap, subset: &[usize], k_u: f64) -> Result<SegmentSweep> {
    let recs = region_records(mm, subset)?;
    let rows: Vec<Result<SegmentSweep>> = par::map_range(recs.len(), |a| {
        let mut acc = SegmentSweep {
            pairs_checked: 0,
            failures: 0,
            min_projection: f64::INFINITY,
        };
        for b in &recs[a + 1..] {
            let eps = recs[a].t_minus.distance(&b.t_minus);
            if eps * eps >= 0.5 * k_u {
                continue;
            }
            let s = segment_normal_check(mm, recs[a].i, b.i, k_u)?;
            acc.pairs_checked += 1;
            acc.failures += usize::from(!s.pass);
            acc.min_projection = acc.min_projection.min(s.min_projection);
        }
        Ok(acc)
    });
    rows.into_iter().try_fold(
        SegmentSweep {
            pairs_checked: 0,
            failures: 0,
            min_projection: f64::INFINITY,
        },
        |acc, r| {
            let r = r?;
            Ok(SegmentSweep {
                pairs_checked: acc.pairs_checked + r.pairs_checked,
                failures: acc.failures + r.failures,
                min_projection: acc.min_projection.min(r.min_projection),
            })
        },
    )
}

/// `α = max(0, ∠(u, v) - π/2)` and `|u + v| - |u| cos α`, which is nonnegative
/// whenever `α < π/2`.
pub fn vector_lemma_margin(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    if u.len() != v.len() {
        return Err(config("vectors differ in dimension"));
    }
    let nu = norm(u);
    if nu == 0.0 {
        return Err(domain("u must be nonzero"));
    }
    let alpha = if norm(v) == 0.0 {
        0.0
    } else {
        let theta = angle(u, v);
        if theta >= PI {
            return Err(domain("u and v are antiparallel"));
        }
        (theta - FRAC_PI_2).max(0.0)
    };
    if alpha >= FRAC_PI_2 {
        return Err(domain("angle excess reaches π/2"));
    }
    let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    Ok((alpha, norm(&sum) - nu * alpha.cos()))
}

fn target_records<'a>(
    inv: &'a InverseMaps,
    subset: &[usize],
) -> Result<Vec<&'a crate::multimap::InverseRecord>> {
    subset
        .iter()
        .map(|&j| {
            inv.records
                .get(j)
                .ok_or_else(|| config(format!("target atom {j} out of range")))
        })
        .collect()
}

/// `min (s⁻(y₁) - s⁻(y₀))·(y₁ - y₀)` over pairs of the subset.
pub fn monotonicity_check(inv: &InverseMaps, subset: &[usize]) -> Result<f64> {
    let recs = target_records(inv, subset)?;
    if recs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} target atom(s) in the region",
            recs.len()
        )));
    }
    Ok(par::min_range(recs.len(), |a| {
        let (s0, y0) = (recs[a].s_minus.coords(), recs[a].y.coords());
        recs[a + 1..]
            .iter()
            .map(|b| dot(&sub(b.s_minus.coords(), s0), &sub(b.y.coords(), y0)))
            .fold(f64::INFINITY, f64::min)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaValue {
    pub j: usize,
    /// Angle between `y₁ - y` and `ω(y₁)y₁ - ω(y)y`.
    pub beta: f64,
    /// Angle between `y` and `y₁`.
    pub gamma: f64,
    /// `(π - γ)/2`
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyProbe {
    pub y1: usize,
    pub m: u32,
    /// `Θ_m(y₁)`: the `y` with `β ∈ [π/2 - 1/m, π/2]`.
    pub members: Vec<usize>,
    pub betas: Vec<BetaValue>,
    pub bound_ok: bool,
    /// `min |s⁺(y₁) - s⁺(y)| / |y₁ - y|` over `Θ_m(y₁)`, if nonempty.
    pub k_m: Option<f64>,
}

/// Angles `β(y, y₁)` for every other `y` in T2, membership in `Θ_m(y₁)`, and
/// the bound `β < (π - γ)/2`.
pub fn dichotomy_probe(inv: &InverseMaps, y1: usize, m: u32) -> Result<DichotomyProbe> {
    if m <= 1 {
        return Err(config("m must exceed 1"));
    }
    let r1 = inv
        .records
        .get(y1)
        .ok_or_else(|| config(format!("target atom {y1} out of range")))?;
    if r1.region != TargetRegion::T2 {
        return Err(domain(format!("target atom {y1} is not in T2")));
    }
    let w1 = scale(r1.y.coords(), r1.omega);
    let mut betas = Vec::new();
    for r in inv
        .records
        .iter()
        .filter(|r| r.region == TargetRegion::T2 && r.j != y1)
    {
        let diff_w = sub(&w1, &scale(r.y.coords(), r.omega));
        if norm(&diff_w) <= 1e-15 {
            return Err(domain(format!("ω(y₁)y₁ = ω(y)y for y = {}", r.j)));
        }
        let diff_y = sub(r1.y.coords(), r.y.coords());
        let gamma = angle(r.y.coords(), r1.y.coords());
        betas.push(BetaValue {
            j: r.j,
            beta: angle(&diff_y, &diff_w),
            gamma,
            bound: 0.5 * (PI - gamma),
        });
    }
    let lo = FRAC_PI_2 - 1.0 / m as f64;
    let members: Vec<usize> = betas
        .iter()
        .filter(|b| b.beta >= lo && b.beta <= FRAC_PI_2)
        .map(|b| b.j)
        .collect();
    let k_m = members
        .iter()
        .map(|&j| {
            let r = &inv.records[j];
            r1.s_plus.distance(&r.s_plus) / r1.y.distance(&r.y)
        })
        .reduce(f64::min);
    Ok(DichotomyProbe {
        y1,
        m,
        bound_ok: betas.iter().all(|b| b.beta < b.bound),
        members,
        betas,
        k_m,
    })
}

/// Largest `β - (π - γ)/2` over all ordered T2 pairs; negative when the bound holds.
pub fn beta_bound_excess(inv: &InverseMaps) -> Result<(f64, usize)> {
    let t2 = inv.indices_in(TargetRegion::T2);
    let rows: Vec<Result<(f64, usize)>> = par::map_slice(&t2, |&y1| {
        let p = dichotomy_probe(inv, y1, 2)?;
        Ok((
            p.betas
                .iter()
                .map(|b| b.beta - b.bound)
                .fold(f64::NEG_INFINITY, f64::max),
            p.betas.len(),
        ))
    });
    rows.into_iter().try_fold((f64::NEG_INFINITY, 0), |acc, r| {
        let r = r?;
        Ok((acc.0.max(r.0), acc.1 + r.1))
    })
}

/// CSV rows `y1,y,beta,gamma,bound,in_theta`.
pub fn write_beta_csv<W: Write>(probe: &DichotomyProbe, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["y1", "y", "beta", "gamma", "bound", "in_theta"])?;
    for b in &probe.betas {
        wr.write_record([
            probe.y1.to_string(),
            b.j.to_string(),
            b.beta.to_string(),
            b.gamma.to_string(),
            b.bound.to_string(),
            probe.members.contains(&b.j).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub exponent: f64,
    /// `min |s⁻(y₁) - s⁻(y₀)| / |y₁ - y₀|^exponent`
    pub min_ratio_minus: f64,
    /// `min |s⁺(y₁) - s⁺(y₀)| / |y₁ - y₀|^exponent`
    pub min_ratio_plus: f64,
    pub pair_count: usize,
}

impl InjectivityReport {
    /// Compares against `Ĉ⁻ = 1 / C⁻`.
    pub fn certifies(&self, c_minus: f64) -> bool {
        self.min_ratio_minus >= 1.0 / c_minus
    }
}

/// Quantified injectivity of `s⁻` and `s⁺` over window pairs; coincident
/// target atoms are merged first.
pub fn injectivity_lower_bound(
    inv: &InverseMaps,
    subset: &[usize],
    exponent: f64,
    window: ScaleWindow,
) -> Result<InjectivityReport> {
    let mut recs = target_records(inv, subset)?;
    let mut kept: Vec<&crate::multimap::InverseRecord> = Vec::new();
    for r in recs.drain(..) {
        if kept.iter().all(|k| k.y.distance(&r.y) > 1e-12) {
            kept.push(r);
        }
    }
    let rows: Vec<(f64, f64, usize)> = par::map_range(kept.len(), |a| {
        let mut acc = (f64::INFINITY, f64::INFINITY, 0);
        for b in &kept[a + 1..] {
            let r = kept[a].y.distance(&b.y);
            if !window.contains(r) {
                continue;
            }
            let denom = r.powf(exponent);
            acc.0 = acc.0.min(kept[a].s_minus.distance(&b.s_minus) / denom);
            acc.1 = acc.1.min(kept[a].s_plus.distance(&b.s_plus) / denom);
            acc.2 += 1;
        }
        acc
    });
    let pair_count: usize = rows.iter().map(|r| r.2).sum();
    if pair_count == 0 {
        return Err(Error::InsufficientData(
            "no distinct close target pairs".into(),
        ));
    }
    Ok(InjectivityReport {
        exponent,
        min_ratio_minus: rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        min_ratio_plus: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        pair_count,
    })
}

/// Largest distance between a point and its image, a cheap sanity bound.
pub fn max_displacement(samples: &[(SpherePoint, SpherePoint)]) -> f64 {
    samples
        .iter()
        .map(|(x, f)| dist(x.coords(), f.coords()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Chart;
    use crate::measure::quasi_uniform_mesh;
    use crate::multimap::InverseRecord;
    use approx::assert_abs_diff_eq;

    fn pt(v: &[f64]) -> SpherePoint {
        SpherePoint::normalized(v.to_vec()).unwrap()
    }

    fn full() -> ScaleWindow {
        ScaleWindow::new(0.0, 2.0).unwrap()
    }

    #[test]
    fn identity_fit() {
        let mesh = quasi_uniform_mesh(2, 100, 0).unwrap();
        let s: Vec<_> = mesh.points.iter().map(|p| (p.clone(), p.clone())).collect();
        let rep = holder_fit(&s, "all", full()).unwrap();
        assert_abs_diff_eq!(rep.alpha_hat.unwrap(), 1.0, epsilon = 0.02);
        assert_abs_diff_eq!(rep.c_hat.unwrap(), 1.0, epsilon = 0.05);
        assert!(!rep.low_confidence && !rep.degenerate);
    }

    #[test]
    fn constant_map_is_degenerate() {
        let mesh = quasi_uniform_mesh(2, 20, 0).unwrap();
        let f0 = pt(&[0.0, 0.0, 1.0]);
        let s: Vec<_> = mesh
            .points
            .iter()
            .map(|p| (p.clone(), f0.clone()))
            .collect();
        let rep = holder_fit(&s, "const", full()).unwrap();
        assert!(rep.degenerate);
        assert!(rep.alpha_hat.is_none());
    }

    #[test]
    fn too_few_samples() {
        let s = vec![(pt(&[1.0, 0.0]), pt(&[1.0, 0.0]))];
        assert!(matches!(
            holder_fit(&s, "x", full()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn square_root_pairs() {
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|k| {
                let r = 1e-3 * (500f64).powf(k as f64 / 199.0);
                (r, r.sqrt())
            })
            .collect();
        let rep = holder_fit_pairs(&pairs, "synthetic", full()).unwrap();
        assert_abs_diff_eq!(rep.alpha_hat.unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.c_hat.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_formulas() {
        let rc = RegionConstants::from_parts(0.5, 3.0);
        assert_eq!(rc.c_minus_statement, 15.0);
        assert_eq!(rc.c_minus_proof, 25.0);
    }

    fn bivalent_record(i: usize, x: &[f64], tp: &[f64], tm: &[f64]) -> MapRecord {
        let x = pt(x);
        let (tp, tm) = (pt(tp), pt(tm));
        let diff = sub(tp.coords(), tm.coords());
        let lambda = dot(&diff, x.coords());
        MapRecord {
            i,
            x,
            t_plus: tp,
            t_minus: tm,
            lambda,
            collinearity_residual: 0.0,
            bivalent: true,
            region: Some(Region::S2),
            plus_targets: vec![],
            minus_targets: vec![],
        }
    }

    fn mm_of(records: Vec<MapRecord>) -> MultiMap {
        MultiMap {
            records,
            merge_tol: 1e-6,
            anomalies: vec![],
        }
    }

    #[test]
    fn k_u_is_min_of_negated_dots() {
        // x·t⁻ = -0.3 and -0.5
        let h = |c: f64| [(1.0 - c * c).sqrt(), 0.0, c];
        let mm = mm_of(vec![
            bivalent_record(0, &[0.0, 0.0, 1.0], &h(0.5), &h(-0.3)),
            bivalent_record(1, &[0.0, 0.0, 1.0], &h(0.5), &h(-0.5)),
        ]);
        let w = ScaleWindow::new(0.0, 2.0).unwrap();
        // both atoms share x, so there is no pair for C⁺
        assert!(region_constants(&mm, &[0, 1], w).is_err());
        let mm = mm_of(vec![
            bivalent_record(0, &[0.0, 0.0, 1.0], &h(0.5), &h(-0.3)),
            bivalent_record(1, &[0.0, 0.1, 1.0], &h(0.5), &h(-0.5)),
        ]);
        let rc = region_constants(&mm, &[0, 1], w).unwrap();
        assert_abs_diff_eq!(rc.k_u, 0.3, epsilon = 1e-15);
        assert!(rc.k_u_plus_form < 0.0);
    }

    #[test]
    fn segment_examples() {
        let mm = mm_of(vec![
            bivalent_record(0, &[0.0, 0.0, 1.0], &[0.6, 0.0, 0.8], &[0.6, 0.0, -0.8]),
            bivalent_record(1, &[0.0, 0.0, 1.0], &[0.6, 0.0, 0.8], &[0.6, 0.0, -0.8]),
            bivalent_record(2, &[0.0, 0.0, 1.0], &[0.6, 0.0, 0.8], &[-0.6, 0.0, 0.8]),
        ]);
        let s = segment_normal_check(&mm, 0, 1, 1.6).unwrap();
        assert_abs_diff_eq!(s.min_projection, 0.8, epsilon = 1e-15);
        assert!(s.pass);
        assert!(!segment_normal_check(&mm, 0, 1, 1.7).unwrap().pass);
        assert!(matches!(
            segment_normal_check(&mm, 0, 2, 0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn nearby_split_pair_passes() {
        let h = |a: f64| [0.6 * a.cos(), 0.6 * a.sin(), -0.8];
        let mm = mm_of(vec![
            bivalent_record(0, &[0.0, 0.0, 1.0], &[0.6, 0.0, 0.8], &h(0.0)),
            bivalent_record(1, &[0.01, 0.0, 1.0], &[0.6, 0.0, 0.8], &h(0.05)),
        ]);
        let k = mm
            .records
            .iter()
            .map(|r| -r.x_dot_minus())
            .fold(f64::INFINITY, f64::min);
        let eps = mm.records[0].t_minus.distance(&mm.records[1].t_minus);
        assert!(eps * eps < k / 2.0);
        assert!(segment_normal_check(&mm, 0, 1, k).unwrap().pass);
        let sweep = segment_normal_sweep(&mm, &[0, 1], k).unwrap();
        assert_eq!((sweep.pairs_checked, sweep.failures), (1, 0));
    }

    #[test]
    fn vector_lemma_examples() {
        let (a, m) = vector_lemma_margin(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(a, 0.0);
        assert_abs_diff_eq!(m, 2f64.sqrt() - 1.0, epsilon = 1e-15);
        let h = 0.5f64.sqrt();
        let (a, m) = vector_lemma_margin(&[1.0, 0.0], &[-h, h]).unwrap();
        assert_abs_diff_eq!(a, PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m, 0.0583, epsilon = 1e-4);
        let (a, m) = vector_lemma_margin(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!((a, m), (0.0, 0.0));
        assert!(vector_lemma_margin(&[1.0, 0.0], &[-1.0, 0.0]).is_err());
        assert!(vector_lemma_margin(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn target(j: usize, y: &[f64], omega: f64, sp: &[f64], sm: &[f64]) -> InverseRecord {
        InverseRecord {
            j,
            y: pt(y),
            s_plus: pt(sp),
            s_minus: pt(sm),
            omega,
            residual: 0.0,
            bivalent: true,
            region: TargetRegion::T2,
            plus_sources: vec![],
            minus_sources: vec![],
        }
    }

    #[test]
    fn beta_examples() {
        let inv = InverseMaps {
            records: vec![
                target(0, &[1.0, 0.0], 2.0, &[1.0, 0.0], &[-1.0, 0.0]),
                target(1, &[0.0, 1.0], 1.0, &[0.0, 1.0], &[0.0, -1.0]),
            ],
            anomalies: vec![],
        };
        let p = dichotomy_probe(&inv, 0, 60).unwrap();
        assert_abs_diff_eq!(p.betas[0].beta.cos(), 3.0 / 10f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(p.betas[0].bound, PI / 4.0, epsilon = 1e-14);
        assert!(p.bound_ok);
        assert!(p.members.is_empty());
        assert!(p.k_m.is_none());
        let mut buf = Vec::new();
        write_beta_csv(&p, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);

        let inv = InverseMaps {
            records: vec![
                target(0, &[1.0, 0.0], 1.0, &[1.0, 0.0], &[-1.0, 0.0]),
                target(1, &[0.0, 1.0], 1.0, &[0.0, 1.0], &[0.0, -1.0]),
            ],
            anomalies: vec![],
        };
        let p = dichotomy_probe(&inv, 0, 60).unwrap();
        // ω(y₁)y₁ - ω(y)y is parallel to y₁ - y
        assert_abs_diff_eq!(p.betas[0].beta, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn identity_inverse_monotone_and_injective() {
        let mesh = quasi_uniform_mesh(2, 40, 0).unwrap();
        let inv = InverseMaps {
            records: mesh
                .points
                .iter()
                .enumerate()
                .map(|(j, y)| InverseRecord {
                    j,
                    y: y.clone(),
                    s_plus: y.clone(),
                    s_minus: y.clone(),
                    omega: 0.0,
                    residual: 0.0,
                    bivalent: false,
                    region: TargetRegion::T1,
                    plus_sources: vec![j],
                    minus_sources: vec![j],
                })
                .collect(),
            anomalies: vec![],
        };
        let all: Vec<usize> = (0..40).collect();
        let min_sq = (0..40)
            .flat_map(|a| (a + 1..40).map(move |b| (a, b)))
            .map(|(a, b)| mesh.points[a].distance(&mesh.points[b]).powi(2))
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(
            monotonicity_check(&inv, &all).unwrap(),
            min_sq,
            epsilon = 1e-14
        );
        assert!(matches!(
            monotonicity_check(&inv, &[3]),
            Err(Error::InsufficientData(_))
        ));
        // the identity is an isometry, so the ratio at exponent 1 is exactly 1
        let rep = injectivity_lower_bound(&inv, &all, 1.0, full()).unwrap();
        assert_abs_diff_eq!(rep.min_ratio_minus, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.min_ratio_plus, 1.0, epsilon = 1e-12);

        let dup = InverseMaps {
            records: vec![inv.records[0].clone(), inv.records[0].clone()],
            anomalies: vec![],
        };
        assert!(matches!(
            injectivity_lower_bound(&dup, &[0, 1], 7.0, full()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn generous_constant_on_smooth_map() {
        // univalent stand-in: t⁺ = t⁻ = a small rotation of x
        let chart = Chart::at(&pt(&[0.0, 0.0, 1.0]));
        let recs: Vec<MapRecord> = (0..30)
            .map(|k| {
                let y = crate::geometry::LocalCoords(vec![0.01 * k as f64, 0.005 * k as f64]);
                let x = chart.lift(&y).unwrap();
                let c = x.coords();
                let img = [c[0] + 0.1 * c[2], c[1], c[2] - 0.1 * c[0]];
                bivalent_record(k, c, &img, &img)
            })
            .collect();
        let mm = mm_of(recs);
        let all: Vec<usize> = (0..30).collect();
        let chk = t_minus_bound_check_with(&mm, &all, full(), 100.0).unwrap();
        assert!(chk.holds());
        assert!(t_minus_bound_check_with(&mm, &[0], full(), 100.0).is_err());
    }
}
