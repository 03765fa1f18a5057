//! Bézier curve optimisation (BCO).
//!
//! The control points of a Bézier curve joining `s` and `g` are moved by Adam
//! along the analytic gradient of a penalty loss
//!
//! ```text
//! L = L_l + f_T L_T + f_σ L_σ + f_o L_o + f_c L_c
//! ```
//!
//! where `L_l` is the length of the curve sampled at `N` uniform parameters
//! divided by `‖g − s‖`, and the other terms are trapezoidal integrals over
//! the same samples:
//!
//! * `L_T = ∫ 1 − T̄(B(t)) dt`,
//! * `L_σ = ∫ σ²(B(t)) dt`,
//! * `L_o = ∫ max(0, R − d̄(B(t))) dt` (obstacle clearance violation),
//! * `L_c = ∫ max(0, κ(t) − 1/r₀) dt` (curvature violation).
//!
//! The first and last control points are pinned to `s` and `g`.

use serde::{Deserialize, Serialize};

use crate::bezier::{basis_row, curvature_from_derivatives, sample_count, ControlPolygon};
use crate::field::Field;
use crate::optim::Adam;
use crate::{robust_ceil, Error, Result, Vec2, TRAVERSABILITY_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcoConfig {
    pub f_t: f64,
    pub f_sigma: f64,
    pub f_o: f64,
    pub f_c: f64,
    /// Safety radius `R`, metres.
    pub safety_radius: f64,
    /// Minimum curvature radius `r₀`, metres.
    pub r0: f64,
    pub lr: f64,
    /// Integration sampling resolution, metres.
    pub res: f64,
    /// Control-point spacing for initialisation, metres.
    pub cpr: f64,
    pub max_iter: usize,
    pub early_stop_tol: f64,
    pub patience: usize,
}

impl Default for BcoConfig {
    fn default() -> Self {
        Self {
            f_t: 10.0,
            f_sigma: 200.0,
            f_o: 1000.0,
            f_c: 100.0,
            safety_radius: 0.1,
            r0: 0.25,
            lr: 0.05,
            res: 0.1,
            cpr: 0.5,
            max_iter: 500,
            early_stop_tol: 1e-4,
            patience: 10,
        }
    }
}

impl BcoConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.f_t, self.f_sigma, self.f_o, self.f_c];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig("bco: loss weights must be >= 0".into()));
        }
        if [self.r0, self.safety_radius, self.res, self.cpr]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::InvalidConfig(
                "bco: r0, safety_radius, res and cpr must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("bco: max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loss terms of one curve. `total` is the weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    #[serde(rename = "L_l")]
    pub length: f64,
    #[serde(rename = "L_T")]
    pub traversability: f64,
    #[serde(rename = "L_sigma")]
    pub variance: f64,
    #[serde(rename = "L_o")]
    pub obstacle: f64,
    #[serde(rename = "L_c")]
    pub curvature: f64,
}

impl LossBreakdown {
    pub fn recompose(&self, cfg: &BcoConfig) -> f64 {
        self.length
            + cfg.f_t * self.traversability
            + cfg.f_sigma * self.variance
            + cfg.f_o * self.obstacle
            + cfg.f_c * self.curvature
    }

    pub fn is_finite(&self) -> bool {
        [
            self.total,
            self.length,
            self.traversability,
            self.variance,
            self.obstacle,
            self.curvature,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Gradient of every loss term with respect to each control point. Entries
/// for the pinned endpoints are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub total: Vec<Vec2>,
    pub length: Vec<Vec2>,
    pub traversability: Vec<Vec2>,
    pub variance: Vec<Vec2>,
    pub obstacle: Vec<Vec2>,
    pub curvature: Vec<Vec2>,
}

/// Control points evenly spaced on `[s, g]`, about `cpr` apart.
pub fn init_priorless(s: &Vec2, g: &Vec2, cpr: f64) -> Result<ControlPolygon> {
    let len = (g - s).norm();
    if len < 1e-6 {
        return Err(Error::DegenerateEndpoints);
    }
    let m = control_point_count(len, cpr);
    let mut pts: Vec<Vec2> = (0..m)
        .map(|i| s + (g - s) * (i as f64 / (m - 1) as f64))
        .collect();
    pts[0] = *s;
    pts[m - 1] = *g;
    ControlPolygon::new(pts)
}

fn control_point_count(length: f64, cpr: f64) -> usize {
    (robust_ceil(length / cpr) + 1).max(2)
}

/// Resamples a prior polyline by arc length into control points about `cpr`
/// apart. The first and last waypoints are kept exactly.
pub fn init_from_prior(path: &[Vec2], cpr: f64) -> Result<ControlPolygon> {
    let mut pts: Vec<Vec2> = Vec::with_capacity(path.len());
    for p in path {
        if pts.last().is_none_or(|q: &Vec2| (p - q).norm() > 1e-12) {
            pts.push(*p);
        }
    }
    if path.len() < 2 || pts.len() < 2 {
        return Err(Error::DegenerateEndpoints);
    }
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let m = control_point_count(total, cpr);
    let mut out = Vec::with_capacity(m);
    let mut seg = 0;
    for i in 0..m {
        let target = total * i as f64 / (m - 1) as f64;
        while seg + 1 < pts.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let u = if span > 0.0 {
            ((target - cum[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * u);
    }
    out[0] = path[0];
    out[m - 1] = path[path.len() - 1];
    ControlPolygon::new(out)
}

/// Loss at the sample count implied by `cfg.res`.
pub fn loss<F: Field + ?Sized>(model: &F, p: &ControlPolygon, cfg: &BcoConfig) -> LossBreakdown {
    evaluate(model, p, cfg, sample_count(p, cfg.res), false).0
}

/// Analytic gradient of the discretised loss at the sample count implied by
/// `cfg.res`.
pub fn loss_gradient<F: Field + ?Sized>(
    model: &F,
    p: &ControlPolygon,
    cfg: &BcoConfig,
) -> LossGradient {
    evaluate(model, p, cfg, sample_count(p, cfg.res), true)
        .1
        .expect("gradient requested")
}

/// Loss (and optionally its gradient) with exactly `n_samples` samples
/// uniformly spaced in `t`.
pub fn evaluate<F: Field + ?Sized>(
    model: &F,
    p: &ControlPolygon,
    cfg: &BcoConfig,
    n_samples: usize,
    with_gradient: bool,
) -> (LossBreakdown, Option<LossGradient>) {
    assert!(n_samples >= 2);
    let m = p.len();
    let dt = 1.0 / (n_samples - 1) as f64;
    let chord = (p.last() - p.first()).norm().max(1e-12);
    let kappa_max = 1.0 / cfg.r0;

    let rows: Vec<_> = (0..n_samples)
        .map(|k| basis_row(m, k as f64 * dt))
        .collect();
    let combine = |w: &[f64]| {
        p.points()
            .iter()
            .zip(w)
            .fold(Vec2::zeros(), |acc, (q, w)| acc + q * *w)
    };
    let positions: Vec<Vec2> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| match k {
            0 => p.first(),
            k if k == n_samples - 1 => p.last(),
            _ => combine(&r.value),
        })
        .collect();
    let posts = model.infer_batch(&positions);

    let mut out = LossBreakdown::default();
    let zeros = vec![Vec2::zeros(); m];
    let mut grad = with_gradient.then(|| LossGradient {
        total: zeros.clone(),
        length: zeros.clone(),
        traversability: zeros.clone(),
        variance: zeros.clone(),
        obstacle: zeros.clone(),
        curvature: zeros,
    });

    for (k, (row, post)) in rows.iter().zip(&posts).enumerate() {
        let w = if k == 0 || k == n_samples - 1 {
            0.5 * dt
        } else {
            dt
        };
        let d1 = combine(&row.d1);
        let d2 = combine(&row.d2);


        let t_raw = post.mean_t;
        let t_clamped = t_raw.clamp(TRAVERSABILITY_FLOOR, 1.0);
        out.traversability += w * (1.0 - t_clamped);

        out.variance += w * post.variance;

        let clearance = cfg.safety_radius - post.mean_d;
        if clearance > 0.0 {
            out.obstacle += w * clearance;
        }

        let kappa = curvature_from_derivatives(&d1, &d2);
        let excess = kappa.value - kappa_max;
        if excess > 0.0 {
            out.curvature += w * excess;
        }

        let Some(gr) = grad.as_mut() else { continue };

        // d(integrand)/d(position), d(integrand)/d(d1), d(integrand)/d(d2)
        let g_t_pos = if t_raw > TRAVERSABILITY_FLOOR && t_raw < 1.0 {
            -post.grad_mean_t * w
        } else {
            Vec2::zeros()
        };
        let g_v_pos = if post.variance > 0.0 {
            post.grad_variance * w
        } else {
            Vec2::zeros()
        };
        let g_o_pos = if clearance > 0.0 {
            -post.grad_mean_d * w
        } else {
            Vec2::zeros()
        };
        let (g_c_d1, g_c_d2) = if excess > 0.0 && !kappa.degenerate {
            let cross = d1.x * d2.y - d1.y * d2.x;
            let sgn = cross.signum();
            let s2 = d1.norm_squared();
            let s3 = s2 * s2.sqrt();
            let s5 = s3 * s2;
            // κ = |c| / s³,  c = x'y'' − y'x''
            let dc_dd1 = Vec2::new(d2.y, -d2.x);
            let dc_dd2 = Vec2::new(-d1.y, d1.x);
            let gk_d1 = dc_dd1 * (sgn / s3) - d1 * (3.0 * cross.abs() / s5);
            let gk_d2 = dc_dd2 * (sgn / s3);
            (gk_d1 * w, gk_d2 * w)
        } else {
            (Vec2::zeros(), Vec2::zeros())
        };

        for i in 1..m - 1 {
            let (bv, b1, b2) = (row.value[i], row.d1[i], row.d2[i]);
            gr.traversability[i] += g_t_pos * bv;
            gr.variance[i] += g_v_pos * bv;
            gr.obstacle[i] += g_o_pos * bv;
            gr.curvature[i] += g_c_d1 * b1 + g_c_d2 * b2;
        }
    }

    // L_l over the sampled polyline
    for k in 0..n_samples - 1 {
        let seg = positions[k + 1] - positions[k];
        let len = seg.norm();
        out.length += len / chord;
        if let (Some(gr), true) = (grad.as_mut(), len > 0.0) {
            let e = seg / (len * chord);
            let (r0, r1) = (&rows[k].value, &rows[k + 1].value);
            for i in 1..m - 1 {
                gr.length[i] += e * (r1[i] - r0[i]);
            }
        }
    }

    out.total = out.recompose(cfg);
    if let Some(gr) = grad.as_mut() {
        for i in 0..m {
            gr.total[i] = gr.length[i]
                + gr.traversability[i] * cfg.f_t
                + gr.variance[i] * cfg.f_sigma
                + gr.obstacle[i] * cfg.f_o
                + gr.curvature[i] * cfg.f_c;
        }
    }
    (out, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIter,
}

/// Every iteration's loss and the curve the last entry was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisationTrace {
    pub losses: Vec<LossBreakdown>,
    pub polygon: ControlPolygon,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

impl OptimisationTrace {
    pub fn final_loss(&self) -> &LossBreakdown {
        self.losses.last().expect("at least one iteration")
    }

    /// `[{total, L_l, L_T, L_sigma, L_o, L_c}, ...]`
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.losses)?)
    }
}

/// Gradient components below this are rounding noise and are zeroed before
/// the Adam step.
pub const GRADIENT_FLUSH: f64 = 1e-12;

/// Runs Adam on the interior control points until the loss changes by less
/// than `early_stop_tol` for `patience` consecutive iterations, or until
/// `max_iter` losses have been recorded. The sample count is re-derived from
/// the current curve length at every iteration.
pub fn optimise<F: Field + ?Sized>(
    model: &F,
    p0: &ControlPolygon,
    cfg: &BcoConfig,
) -> OptimisationTrace {
    let mut p = p0.clone();
    let m = p.len();
    let mut adam = Adam::new(m.saturating_sub(2), cfg.lr);
    let mut losses = Vec::new();
    let mut streak = 0;
    let mut stop_reason = StopReason::MaxIter;

    for it in 0..cfg.max_iter {
        let n = sample_count(&p, cfg.res);
        let (l, g) = evaluate(model, &p, cfg, n, true);
        if let Some(prev) = losses.last() {
            let prev: &LossBreakdown = prev;
            if (l.total - prev.total).abs() < cfg.early_stop_tol {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        losses.push(l);
        if streak >= cfg.patience {
            stop_reason = StopReason::Converged;
            break;
        }
        if it + 1 == cfg.max_iter {
            break;
        }
        let mut g = g.expect("gradient requested").total;
        for v in g.iter_mut().flat_map(|v| v.iter_mut()) {
            if v.abs() < GRADIENT_FLUSH {
                *v = 0.0;
            }
        }
        adam.step(&mut p.points_mut()[1..m - 1], &g[1..m - 1]);
    }

    OptimisationTrace {
        iterations_run: losses.len(),
        losses,
        polygon: p,
        stop_reason,
    }
}
