//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use gprnav_core::bco::BcoConfig;
use gprnav_core::envgen::Rect;
use gprnav_core::field::Field;
use gprnav_core::grid::DiscreteGrid;
use gprnav_core::{GprModel, KernelParams, TrainingSet, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ----------------------------------------------------------------------------
// Dense GP
// ----------------------------------------------------------------------------

pub fn k(a: &Vec2, b: &Vec2, p: &KernelParams) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    p.output_scale * (-(dx * dx + dy * dy) / (2.0 * p.lengthscale * p.lengthscale)).exp()
}

/// Gaussian elimination with partial pivoting on a copy of `a`.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[row][c] -= f * m[col][c];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for c in row + 1..n {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    x
}

pub fn gram(points: &[Vec2], p: &KernelParams) -> Vec<Vec<f64>> {
    let noise = p.observation_noise * p.observation_noise;
    points
        .iter()
        .enumerate()
        .map(|(i, a)| {
            points
                .iter()
                .enumerate()
                .map(|(j, b)| k(a, b, p) + if i == j { noise } else { 0.0 })
                .collect()
        })
        .collect()
}

/// `(mean, variance)` of one output at `q`, solving from scratch.
pub fn dense_posterior(points: &[Vec2], y: &[f64], p: &KernelParams, q: &Vec2) -> (f64, f64) {
    let kmat = gram(points, p);
    let alpha = lu_solve(&kmat, y);
    let kq: Vec<f64> = points.iter().map(|x| k(q, x, p)).collect();
    let mean = kq.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let v = lu_solve(&kmat, &kq);
    let var = p.output_scale - kq.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

/// Negative log marginal likelihood via LU (log-determinant from the pivots).
pub fn dense_nlml(points: &[Vec2], y: &[f64], p: &KernelParams) -> f64 {
    let n = y.len();
    let a = gram(points, p);
    let alpha = lu_solve(&a, y);
    let mut m = a.clone();
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        logdet += m[col][col].abs().ln();
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
        }
    }
    0.5 * y.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>()
        + 0.5 * logdet
        + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Well-separated random points in `[0, side]²`.
pub fn random_points(r: &mut ChaCha8Rng, n: usize, side: f64, min_gap: f64) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Vec2::new(r.random::<f64>() * side, r.random::<f64>() * side);
        if pts.iter().all(|q| (p - q).norm() > min_gap) {
            pts.push(p);
        }
    }
    pts
}

pub fn random_params(r: &mut ChaCha8Rng) -> KernelParams {
    KernelParams::new(
        r.random_range(0.5..2.0),
        r.random_range(0.1..2.0),
        r.random_range(0.05..0.5),
    )
    .unwrap()
}

/// Random model over `[0, 10]²` with smooth-ish targets.
pub fn random_model(seed: u64, n: usize) -> GprModel {
    let mut r = rng(seed);
    let pts = random_points(&mut r, n, 10.0, 0.05);
    let (a, b, c) = (r.random_range(0.3..1.2), r.random_range(0.3..1.2), r.random::<f64>());
    let trav: Vec<f64> = pts
        .iter()
        .map(|p| (0.5 + 0.45 * (a * p.x + c).sin() * (b * p.y).cos()).clamp(0.01, 1.0))
        .collect();
    let dist: Vec<f64> = pts
        .iter()
        .map(|p| ((p.x - 5.0).abs() + 0.3 * (b * p.y).sin()).abs())
        .collect();
    let training = TrainingSet::new(pts, trav, dist).unwrap();
    let pt = random_params(&mut r);
    let pd = random_params(&mut r);
    GprModel::train(training, pt, pd).unwrap()
}

// ----------------------------------------------------------------------------
// Finite differences
// ----------------------------------------------------------------------------

pub fn central_diff(f: impl Fn(&Vec2) -> f64, q: &Vec2, h: f64) -> Vec2 {
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    Vec2::new(
        (f(&(q + ex)) - f(&(q - ex))) / (2.0 * h),
        (f(&(q + ey)) - f(&(q - ey))) / (2.0 * h),
    )
}

/// Relative agreement, falling back to an absolute tolerance for small values.
pub fn close(a: f64, b: f64, rel: f64, abs_floor: f64, small: f64) -> bool {
    let scale = a.abs().max(b.abs());
    if scale < small {
        (a - b).abs() <= abs_floor
    } else {
        (a - b).abs() <= rel * scale
    }
}

// ----------------------------------------------------------------------------
// Grid search
// ----------------------------------------------------------------------------

#[derive(PartialEq)]
struct State(f64, usize);
impl Eq for State {}
impl PartialOrd for State {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for State {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Plain Dijkstra over the 8-connected lattice, node costs from the grid's
/// stored attributes.
pub fn dijkstra(grid: &DiscreteGrid, s: usize, g: usize, f_t: f64, f_sigma: f64) -> Option<f64> {
    let (nx, ny) = grid.dims();
    let res = grid.resolution();
    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(State(0.0, s));
    while let Some(State(d, u)) = heap.pop() {
        if u == g {
            return Some(d);
        }
        if d > dist[u] {
            continue;
        }
        let (ux, uy) = (u % nx, u / nx);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (vx, vy) = (ux as i64 + dx, uy as i64 + dy);
                if vx < 0 || vy < 0 || vx >= nx as i64 || vy >= ny as i64 {
                    continue;
                }
                let v = vy as usize * nx + vx as usize;
                if grid.is_blocked(v) {
                    continue;
                }
                let len = res * ((dx * dx + dy * dy) as f64).sqrt();
                let t = grid.mean_t(v).clamp(1e-3, 1.0);
                let c = len + (f_t * (1.0 - t) + f_sigma * grid.variance(v));
                if d + c < dist[v] {
                    dist[v] = d + c;
                    heap.push(State(d + c, v));
                }
            }
        }
    }
    None
}

// ----------------------------------------------------------------------------
// Curves
// ----------------------------------------------------------------------------

pub fn de_casteljau(points: &[Vec2], t: f64) -> Vec2 {
    let mut b = points.to_vec();
    for r in 1..b.len() {
        for i in 0..b.len() - r {
            b[i] = b[i] * (1.0 - t) + b[i + 1] * t;
        }
    }
    b[0]
}

pub fn random_polygon(r: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Vec<Vec2> {
    (0..m)
        .map(|_| Vec2::new(r.random_range(lo..hi), r.random_range(lo..hi)))
        .collect()
}

/// Loss terms `[L_l, L_T, L_sigma, L_o, L_c]` by trapezoid rule with `n`
/// uniform parameter samples; derivatives by central differences of
/// de Casteljau with step `1e-5`.
pub fn quadrature_loss<F: Field>(model: &F, pts: &[Vec2], cfg: &BcoConfig, n: usize) -> [f64; 5] {
    let chord = (pts[pts.len() - 1] - pts[0]).norm();
    let h = 1e-5;
    let dt = 1.0 / (n - 1) as f64;
    let mut out = [0.0; 5];
    for i in 0..n {
        let t = i as f64 * dt;
        let w = if i == 0 || i == n - 1 { 0.5 * dt } else { dt };
        let (ta, tb) = ((t - h).max(0.0), (t + h).min(1.0));
        let tm = 0.5 * (ta + tb);
        let (pa, pm, pb) = (de_casteljau(pts, ta), de_casteljau(pts, tm), de_casteljau(pts, tb));
        let hh = 0.5 * (tb - ta);
        let d1 = (pb - pa) / (2.0 * hh);
        let d2 = (pb - pm * 2.0 + pa) / (hh * hh);
        let post = model.infer(&de_casteljau(pts, t));
        out[0] += w * d1.norm() / chord;
        out[1] += w * (1.0 - post.mean_t.clamp(1e-3, 1.0));
        out[2] += w * post.variance;
        out[3] += w * (cfg.safety_radius - post.mean_d).max(0.0);
        let speed = d1.norm();
        let kappa = (d1.x * d2.y - d1.y * d2.x).abs() / speed.powi(3);
        out[4] += w * (kappa - 1.0 / cfg.r0).max(0.0);
    }
    out
}

// ----------------------------------------------------------------------------
// Geometry
// ----------------------------------------------------------------------------

/// Exact area of the union of rectangles clipped to `[x0, x1] × [y0, y1]`.
pub fn union_area(rects: &[Rect], x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let clipped: Vec<[f64; 4]> = rects
        .iter()
        .map(|r| {
            [
                r.min[0].max(x0),
                r.min[1].max(y0),
                (r.min[0] + r.width).min(x1),
                (r.min[1] + r.height).min(y1),
            ]
        })
        .filter(|c| c[0] < c[2] && c[1] < c[3])
        .collect();
    let mut xs: Vec<f64> = clipped.iter().flat_map(|c| [c[0], c[2]]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    for w in xs.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let mut spans: Vec<(f64, f64)> = clipped
            .iter()
            .filter(|c| c[0] <= mid && mid <= c[2])
            .map(|c| (c[1], c[3]))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for (a, b) in spans {
            cur = match cur {
                Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
                Some((ca, cb)) => {
                    covered += cb - ca;
                    Some((a, b))
                }
                None => Some((a, b)),
            };
        }
        if let Some((ca, cb)) = cur {
            covered += cb - ca;
        }
        area += covered * (w[1] - w[0]);
    }
    area
}

/// Upper-tail χ² critical value (Wilson–Hilferty), `z` the normal quantile.
pub fn chi2_critical(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}
