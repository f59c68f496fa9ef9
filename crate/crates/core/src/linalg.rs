//! Dense vector helpers on `f64` slices. Dimensions here are tiny (n+1 <= 5),
//! so plain slices beat pulling a matrix type through every signature.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += s * x`
#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Angle in `[0, pi]` between two nonzero vectors.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos()
}

/// Euclidean distance from the origin to the segment `[a, b]`.
pub fn origin_segment_distance(a: &[f64], b: &[f64]) -> f64 {
    let d = sub(b, a);
    let dd = dot(&d, &d);
    if dd == 0.0 {
        return norm(a);
    }
    let s = (-dot(a, &d) / dd).clamp(0.0, 1.0);
    let mut p = a.to_vec();
    axpy(&mut p, s, &d);
    norm(&p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance() {
        assert!((origin_segment_distance(&[1.0, 1.0], &[1.0, -1.0]) - 1.0).abs() < 1e-15);
        assert!(origin_segment_distance(&[1.0, 0.0], &[-1.0, 0.0]) < 1e-15);
        assert!((origin_segment_distance(&[1.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_right() {
        assert!((angle(&[1.0, 0.0], &[0.0, 3.0]) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
