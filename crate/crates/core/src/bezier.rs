//! Bézier curves in the Bernstein basis: evaluation, parametric derivatives,
//! curvature and fixed-resolution sampling.

use serde::{Deserialize, Serialize};

use crate::{robust_ceil, Error, Result, Vec2};

/// Segments of the polyline used to estimate arc length before sampling.
pub const LENGTH_SEGMENTS: usize = 256;
/// Minimum number of samples returned by [`sample_path`].
pub const MIN_SAMPLES: usize = 8;

/// Ordered control points; the curve has degree `len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct ControlPolygon {
    points: Vec<Vec2>,
}

impl TryFrom<Vec<Vec2>> for ControlPolygon {
    type Error = Error;

    fn try_from(points: Vec<Vec2>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<ControlPolygon> for Vec<Vec2> {
    fn from(p: ControlPolygon) -> Self {
        p.points
    }
}

impl ControlPolygon {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 || points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub(crate) fn points_mut(&mut self) -> &mut [Vec2] {
        &mut self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> usize {
        self.points.len() - 1
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    /// Curve point, checked parameter.
    pub fn evaluate(&self, t: f64) -> Result<Vec2> {
        check_t(t)?;
        Ok(self.point_at(t))
    }

    /// Curve point; `t` must lie in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Vec2 {
        if t == 0.0 {
            return self.first();
        }
        if t == 1.0 {
            return self.last();
        }
        bernstein_sum(&self.points, t)
    }

    pub fn derivatives(&self, t: f64) -> Result<(Vec2, Vec2)> {
        check_t(t)?;
        Ok(self.derivatives_at(t))
    }

    /// First and second derivatives with respect to `t`.
    pub fn derivatives_at(&self, t: f64) -> (Vec2, Vec2) {
        let n = self.degree() as f64;
        let diff1: Vec<Vec2> = self.points.windows(2).map(|w| w[1] - w[0]).collect();
        let d1 = bernstein_sum(&diff1, t) * n;
        let d2 = if diff1.len() >= 2 {
            let diff2: Vec<Vec2> = diff1.windows(2).map(|w| w[1] - w[0]).collect();
            bernstein_sum(&diff2, t) * (n * (n - 1.0))
        } else {
            Vec2::zeros()
        };
        (d1, d2)
    }

    pub fn curvature(&self, t: f64) -> Result<Curvature> {
        check_t(t)?;
        let (d1, d2) = self.derivatives_at(t);
        Ok(curvature_from_derivatives(&d1, &d2))
    }

    /// Length of the `LENGTH_SEGMENTS`-segment chord polyline.
    pub fn approximate_length(&self) -> f64 {
        polyline_length_of(self, LENGTH_SEGMENTS)
    }
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(t))
    }
}

fn polyline_length_of(p: &ControlPolygon, segments: usize) -> f64 {
    let mut prev = p.first();
    let mut len = 0.0;
    for k in 1..=segments {
        let q = p.point_at(k as f64 / segments as f64);
        len += (q - prev).norm();
        prev = q;
    }
    len
}

/// Binomial coefficients `C(n, 0..=n)`.
pub fn binomials(n: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(n + 1);
    let mut v = 1.0;
    c.push(v);
    for i in 1..=n {
        v = v * (n + 1 - i) as f64 / i as f64;
        c.push(v.round());
    }
    c
}

/// Bernstein basis of degree `n` at `t`.
pub fn bernstein(n: usize, t: f64) -> Vec<f64> {
    let c = binomials(n);
    let s = 1.0 - t;
    (0..=n)
        .map(|i| c[i] * t.powi(i as i32) * s.powi((n - i) as i32))
        .collect()
}

fn bernstein_sum(points: &[Vec2], t: f64) -> Vec2 {
    let b = bernstein(points.len() - 1, t);
    points
        .iter()
        .zip(&b)
        .fold(Vec2::zeros(), |acc, (p, w)| acc + p * *w)
}

/// Weights of every control point in the position, first and second
/// derivative at one parameter value: `B(t) = Σ value[i] P_i`, and likewise
/// for `d1`, `d2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub t: f64,
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

pub fn basis_row(m: usize, t: f64) -> BasisRow {
    assert!(m >= 2);
    let n = m - 1;
    let value = bernstein(n, t);
    let b1 = bernstein(n - 1, t);
    let mut d1 = vec![0.0; m];
    for (i, b) in b1.iter().enumerate() {
        d1[i] -= n as f64 * b;
        d1[i + 1] += n as f64 * b;
    }
    let mut d2 = vec![0.0; m];
    if n >= 2 {
        let f = (n * (n - 1)) as f64;
        for (i, b) in bernstein(n - 2, t).iter().enumerate() {
            d2[i] += f * b;
            d2[i + 1] -= 2.0 * f * b;
            d2[i + 2] += f * b;
        }
    }
    BasisRow { t, value, d1, d2 }
}

/// Curvature value, flagged when the first derivative nearly vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    pub value: f64,
    pub degenerate: bool,
}

pub const DEGENERATE_SPEED: f64 = 1e-9;

/// `|x'y'' − y'x''| / (x'² + y'²)^{3/2}`.
pub fn curvature_from_derivatives(d1: &Vec2, d2: &Vec2) -> Curvature {
    let speed2 = d1.norm_squared();
    if speed2.sqrt() <= DEGENERATE_SPEED {
        return Curvature {
            value: 0.0,
            degenerate: true,
        };
    }
    let cross = d1.x * d2.y - d1.y * d2.x;
    Curvature {
        value: cross.abs() / (speed2 * speed2.sqrt()),
        degenerate: false,
    }
}

/// One sample of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub t: f64,
    pub position: Vec2,
    pub d1: Vec2,
    pub d2: Vec2,
    pub curvature: f64,
}

/// `max(8, ceil(length / res))` with the length estimated by a 256-segment
/// polyline.
pub fn sample_count(p: &ControlPolygon, res: f64) -> usize {
    assert!(res > 0.0, "sampling resolution must be positive");
    robust_ceil(p.approximate_length() / res).max(MIN_SAMPLES)
}

/// `n` samples uniformly spaced in `t`, including both ends.
pub fn sample_uniform(p: &ControlPolygon, n: usize) -> Vec<CurveSample> {
    assert!(n >= 2);
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            let (d1, d2) = p.derivatives_at(t);
            CurveSample {
                t,
                position: p.point_at(t),
                d1,
                d2,
                curvature: curvature_from_derivatives(&d1, &d2).value,
            }
        })
        .collect()
}

/// Samples at a spatial resolution of about `res` metres.
pub fn sample_path(p: &ControlPolygon, res: f64) -> Vec<CurveSample> {
    sample_uniform(p, sample_count(p, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> ControlPolygon {
        ControlPolygon::new(pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn constant_polygon() {
        let p = poly(&[(1.5, -2.0); 5]);
        for t in [0.0, 0.3, 0.71, 1.0] {
            let q = p.evaluate(t).unwrap();
            assert!((q - Vec2::new(1.5, -2.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn linear_and_quadratic_values() {
        let line = poly(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(line.evaluate(0.5).unwrap(), Vec2::new(0.5, 0.0));
        let quad = poly(&[(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]);
        assert!((quad.evaluate(0.5).unwrap() - Vec2::new(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn parameter_range_is_checked() {
        let line = poly(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(line.evaluate(1.5), Err(Error::ParameterOutOfRange(_))));
        assert!(line.derivatives(-0.1).is_err());
        assert!(line.curvature(2.0).is_err());
    }

    #[test]
    fn polygon_validation() {
        assert!(ControlPolygon::new(vec![Vec2::zeros()]).is_err());
        assert!(ControlPolygon::new(vec![Vec2::zeros(), Vec2::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn line_derivatives() {
        let line = poly(&[(0.0, 0.0), (1.0, 0.0)]);
        for t in [0.0, 0.4, 1.0] {
            let (d1, d2) = line.derivatives(t).unwrap();
            assert_eq!(d1, Vec2::new(1.0, 0.0));
            assert_eq!(d2, Vec2::zeros());
        }
        let collinear = poly(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        for t in [0.0, 0.25, 0.9] {
            assert!(collinear.derivatives(t).unwrap().1.norm() < 1e-13);
            assert!(collinear.curvature(t).unwrap().value < 1e-13);
        }
    }

    #[test]
    fn curvature_scales_inversely() {
        let p = poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let scaled = poly(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)]);
        for t in [0.1, 0.5, 0.8] {
            let a = p.curvature(t).unwrap().value;
            let b = scaled.curvature(t).unwrap().value;
            assert!((a - 2.0 * b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn degenerate_curvature_is_flagged() {
        let p = poly(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        let c = p.curvature(0.5).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn sample_counts() {
        let line = poly(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(sample_count(&line, 0.1), 10);
        assert_eq!(sample_count(&line, 5.0), MIN_SAMPLES);
        let s = sample_path(&line, 0.1);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0].position, line.first());
        assert_eq!(s[9].position, line.last());
        assert!(s.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn basis_row_matches_direct_forms() {
        let p = poly(&[(0.0, 0.0), (1.0, 3.0), (2.5, -1.0), (4.0, 0.5), (5.0, 2.0)]);
        for t in [0.0, 0.13, 0.5, 0.99, 1.0] {
            let row = basis_row(p.len(), t);
            let combine = |w: &[f64]| {
                p.points()
                    .iter()
                    .zip(w)
                    .fold(Vec2::zeros(), |a, (q, w)| a + q * *w)
            };
            let (d1, d2) = p.derivatives_at(t);
            assert!((combine(&row.value) - p.point_at(t)).norm() < 1e-12);
            assert!((combine(&row.d1) - d1).norm() < 1e-11);
            assert!((combine(&row.d2) - d2).norm() < 1e-10);
        }
    }

    #[test]
    fn polygon_serialises_as_point_list() {
        let p = poly(&[(0.0, 1.0), (2.0, 3.0)]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[[0.0,1.0],[2.0,3.0]]");
        assert_eq!(serde_json::from_str::<ControlPolygon>(&json).unwrap(), p);
        assert!(serde_json::from_str::<ControlPolygon>("[[0.0,1.0]]").is_err());
    }
}
