//! Points on the unit sphere `S^n ⊂ R^{n+1}`, tangent-plane charts and the
//! squared-distance cost together with its first and mixed second derivatives.
//!
//! A chart `π_x` projects onto the hyperplane perpendicular to `x`; in those
//! coordinates the cost reads
//!
//! ```text
//! c(X, Y) = |X - Y|^2 + (sqrt(1 - |X|^2) - sqrt(1 - |Y|^2))^2
//! ```
//!
//! and agrees with `|x - y|^2 = 2 - 2 x·y` on the lifted points.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, dist_sq, dot, norm, sub};

/// Pairs with `x·y` at or below this are rejected by chart operations.
pub const N_GUARD: f64 = 1e-10;
/// Tolerance on `|p| = 1` for [`SpherePoint`].
pub const UNIT_TOL: f64 = 1e-12;
/// Default finite-difference step for first/mixed second derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// A unit vector in `R^{n+1}`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Wraps `coords`, which must already have unit norm.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(domain("a sphere point needs at least two coordinates"));
        }
        let r = norm(&coords);
        if !r.is_finite() || (r - 1.0).abs() > UNIT_TOL {
            return Err(domain(format!("|p| = {r} is not 1 within {UNIT_TOL:e}")));
        }
        Ok(SpherePoint(coords))
    }

    /// Radially projects a nonzero vector onto the sphere.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(domain("a sphere point needs at least two coordinates"));
        }
        let r = norm(&v);
        if !(r.is_finite() && r > 0.0) {
            return Err(domain("cannot normalize a zero or non-finite vector"));
        }
        v.iter_mut().for_each(|c| *c /= r);
        Ok(SpherePoint(v))
    }

    /// The standard basis vector `e_axis` in `R^dim`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(dim >= 2 && axis < dim);
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        SpherePoint(v)
    }

    /// Last standard basis vector, the "north pole" used by the density library.
    pub fn north_pole(dim: usize) -> Self {
        Self::basis(dim, dim - 1)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.len()
    }

    /// `n` for a point of `S^n`.
    pub fn sphere_dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn distance(&self, other: &SpherePoint) -> f64 {
        cost_extrinsic(self, other).sqrt()
    }

    pub fn antipode(&self) -> SpherePoint {
        SpherePoint(self.0.iter().map(|c| -c).collect())
    }

    /// Point reached by the unit-speed geodesic from `self` in the unit tangent direction `v`.
    pub fn geodesic(&self, v: &[f64], t: f64) -> SpherePoint {
        let (s, c) = t.sin_cos();
        SpherePoint(self.0.iter().zip(v).map(|(x, vi)| c * x + s * vi).collect())
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Vec<f64> {
        p.0
    }
}

impl fmt::Debug for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SpherePoint").field(&self.0).finish()
    }
}

/// Coordinates of a point in a tangent-plane chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalCoords(pub Vec<f64>);

impl LocalCoords {
    pub fn zeros(n: usize) -> Self {
        LocalCoords(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

/// The chart `π_x`: an orthonormal tangent frame at `base`.
#[derive(Clone, Debug)]
pub struct Chart {
    base: SpherePoint,
    frame: Vec<Vec<f64>>,
}

impl Chart {
    /// Builds the frame by Gram–Schmidt on the standard basis with the axis of
    /// largest `|base_k|` dropped, so the chart is a deterministic function of `base`.
    pub fn at(base: &SpherePoint) -> Chart {
        let b = base.coords();
        let dim = b.len();
        let drop = (0..dim)
            .max_by(|&i, &j| b[i].abs().total_cmp(&b[j].abs()))
            .unwrap_or(0);
        let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim - 1);
        for k in (0..dim).filter(|&k| k != drop) {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            // two passes of modified Gram–Schmidt keep the frame orthogonal to 1e-16
            for _ in 0..2 {
                let c = dot(&v, b);
                axpy(&mut v, -c, b);
                for f in &frame {
                    let c = dot(&v, f);
                    axpy(&mut v, -c, f);
                }
            }
            let r = norm(&v);
            v.iter_mut().for_each(|c| *c /= r);
            frame.push(v);
        }
        Chart {
            base: base.clone(),
            frame,
        }
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn frame(&self) -> &[Vec<f64>] {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    /// Frame components of an ambient vector.
    pub fn tangent_coords(&self, v: &[f64]) -> Vec<f64> {
        self.frame.iter().map(|f| dot(f, v)).collect()
    }

    /// Ambient tangent vector with the given frame components.
    pub fn tangent_vector(&self, coords: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.base.ambient_dim()];
        for (f, c) in self.frame.iter().zip(coords) {
            axpy(&mut v, *c, f);
        }
        v
    }

    /// `π_base(p)`. Fails unless `base·p > N_GUARD`.
    pub fn project(&self, p: &SpherePoint) -> Result<LocalCoords> {
        if p.ambient_dim() != self.base.ambient_dim() {
            return Err(domain("dimension mismatch between chart and point"));
        }
        let h = self.base.dot(p);
        if h <= N_GUARD {
            return Err(domain(format!(
                "point outside the chart hemisphere (base·p = {h:.3e})"
            )));
        }
        Ok(LocalCoords(self.tangent_coords(p.coords())))
    }

    /// `π_base^{-1}(y)` on the positive hemisphere. Fails unless `|y| < 1`.
    pub fn lift(&self, y: &LocalCoords) -> Result<SpherePoint> {
        if y.0.len() != self.dim() {
            return Err(domain("dimension mismatch between chart and coordinates"));
        }
        let r2 = dot(&y.0, &y.0);
        if !(r2 < 1.0) {
            return Err(domain(format!("|Y| = {} is not < 1", r2.sqrt())));
        }
        let mut p = self.tangent_vector(&y.0);
        axpy(&mut p, (1.0 - r2).sqrt(), self.base.coords());
        SpherePoint::normalized(p)
    }
}

/// `|x - y|^2`, which equals `2 - 2 x·y` on the sphere.
pub fn cost_extrinsic(x: &SpherePoint, y: &SpherePoint) -> f64 {
    dist_sq(x.coords(), y.coords())
}

fn ball_height(v: &[f64], what: &str) -> Result<f64> {
    let r2 = dot(v, v);
    if !(r2 < 1.0) {
        return Err(domain(format!("|{what}| = {} is not < 1", r2.sqrt())));
    }
    Ok((1.0 - r2).sqrt())
}

/// Cost in local coordinates of a common chart.
pub fn cost_local(x: &LocalCoords, y: &LocalCoords) -> Result<f64> {
    let a = ball_height(&x.0, "X")?;
    let b = ball_height(&y.0, "Y")?;
    Ok(dist_sq(&x.0, &y.0) + (a - b) * (a - b))
}

/// `Dc = (∂c/∂X_1, …, ∂c/∂X_n)`; equals `-2Y` at `X = 0`.
pub fn grad_cost_local(x: &LocalCoords, y: &LocalCoords) -> Result<Vec<f64>> {
    let a = ball_height(&x.0, "X")?;
    let b = ball_height(&y.0, "Y")?;
    let k = 2.0 * (a - b) / a;
    Ok(x.0
        .iter()
        .zip(&y.0)
        .map(|(xi, yi)| 2.0 * (xi - yi) - k * xi)
        .collect())
}

/// `true` iff `x·y > 0`.
pub fn in_n(x: &SpherePoint, y: &SpherePoint) -> bool {
    x.dot(y) > 0.0
}

/// Mixed second derivatives `D̄Dc(x, y)` in the orthonormal chart frames at
/// `x` (rows) and `y` (columns), by central differences of step `h` along
/// geodesics in the frame directions.
pub fn cross_derivative_frame(x: &SpherePoint, y: &SpherePoint, h: f64) -> Result<DMatrix<f64>> {
    if x.ambient_dim() != y.ambient_dim() {
        return Err(domain("dimension mismatch"));
    }
    let xy = x.dot(y);
    if xy <= N_GUARD {
        return Err(domain(format!("D̄Dc is undefined off N (x·y = {xy:.3e})")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(domain("finite-difference step must be positive"));
    }
    let fx = Chart::at(x);
    let fy = Chart::at(y);
    let n = fx.dim();
    let xs: Vec<[SpherePoint; 2]> = fx
        .frame()
        .iter()
        .map(|e| [x.geodesic(e, h), x.geodesic(e, -h)])
        .collect();
    let ys: Vec<[SpherePoint; 2]> = fy
        .frame()
        .iter()
        .map(|f| [y.geodesic(f, h), y.geodesic(f, -h)])
        .collect();
    // c = 2 - 2x·y is bilinear up to a constant, so the mixed difference
    // factors as -2 (x₊ - x₋)·(y₊ - y₋), which avoids cancellation
    let dx: Vec<Vec<f64>> = xs
        .iter()
        .map(|[p, m]| sub(p.coords(), m.coords()))
        .collect();
    let dy: Vec<Vec<f64>> = ys
        .iter()
        .map(|[p, m]| sub(p.coords(), m.coords()))
        .collect();
    Ok(DMatrix::from_fn(n, n, |a, b| {
        -2.0 * dot(&dx[a], &dy[b]) / (4.0 * h * h)
    }))
}

/// One Richardson step on [`cross_derivative_frame`]: `(4 M(h/2) - M(h)) / 3`.
pub fn cross_derivative_frame_richardson(
    x: &SpherePoint,
    y: &SpherePoint,
    h: f64,
) -> Result<DMatrix<f64>> {
    let coarse = cross_derivative_frame(x, y, h)?;
    let fine = cross_derivative_frame(x, y, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}
