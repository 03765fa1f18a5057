//! Exact Gaussian-process regression over 2D inputs.
//!
//! Two independent regressions share the training inputs: terrain
//! traversability and obstacle distance. Each has its own RBF kernel
//! hyperparameters. The traversability regression's posterior variance is the
//! uncertainty reported to the planners.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::{Error, Result, Vec2};

/// Lower bound applied to the observation noise standard deviation.
pub const NOISE_FLOOR: f64 = 1e-6;

/// Inputs closer than this are considered duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Negative variances down to this magnitude are rounding noise.
pub const VARIANCE_CLAMP_TOLERANCE: f64 = 1e-9;

const QUERY_CHUNK: usize = 512;

/// Training inputs with their two regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    points: Vec<Vec2>,
    traversability: Vec<f64>,
    obstacle_distance: Vec<f64>,
}

impl TrainingSet {
    pub fn new(
        points: Vec<Vec2>,
        traversability: Vec<f64>,
        obstacle_distance: Vec<f64>,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidTrainingSet("no points".into()));
        }
        if traversability.len() != n || obstacle_distance.len() != n {
            return Err(Error::InvalidTrainingSet(format!(
                "length mismatch: {} points, {} traversability, {} distance",
                n,
                traversability.len(),
                obstacle_distance.len()
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidTrainingSet("non-finite coordinate".into()));
        }
        if let Some(t) = traversability.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::InvalidTrainingSet(format!(
                "traversability {t} outside (0, 1]"
            )));
        }
        if let Some(d) = obstacle_distance
            .iter()
            .find(|d| !(d.is_finite() && **d >= 0.0))
        {
            return Err(Error::InvalidTrainingSet(format!(
                "obstacle distance {d} is negative or not finite"
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (points[i] - points[j]).norm() <= DUPLICATE_TOLERANCE {
                    return Err(Error::SingularTrainingSet(i, j));
                }
            }
        }
        Ok(Self {
            points,
            traversability,
            obstacle_distance,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn traversability(&self) -> &[f64] {
        &self.traversability
    }

    pub fn obstacle_distance(&self) -> &[f64] {
        &self.obstacle_distance
    }

    pub fn targets(&self, target: Target) -> &[f64] {
        match target {
            Target::Traversability => &self.traversability,
            Target::ObstacleDistance => &self.obstacle_distance,
        }
    }

    /// Keeps the points for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&Vec2) -> bool) -> Self {
        let mut out = Self {
            points: Vec::new(),
            traversability: Vec::new(),
            obstacle_distance: Vec::new(),
        };
        for i in 0..self.len() {
            if keep(&self.points[i]) {
                out.points.push(self.points[i]);
                out.traversability.push(self.traversability[i]);
                out.obstacle_distance.push(self.obstacle_distance[i]);
            }
        }
        out
    }
}

/// Which regression output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Traversability,
    ObstacleDistance,
}

/// RBF kernel hyperparameters plus observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Metres.
    pub lengthscale: f64,
    /// Prior variance `k(a, a)`.
    pub output_scale: f64,
    /// Observation noise standard deviation.
    pub observation_noise: f64,
}

impl KernelParams {
    /// Validates the parameters. Noise below [`NOISE_FLOOR`] is raised to it.
    pub fn new(lengthscale: f64, output_scale: f64, observation_noise: f64) -> Result<Self> {
        Self {
            lengthscale,
            output_scale,
            observation_noise,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lengthscale {} must be positive",
                self.lengthscale
            )));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "output scale {} must be positive",
                self.output_scale
            )));
        }
        if !(self.observation_noise.is_finite() && self.observation_noise >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "observation noise {} must be non-negative",
                self.observation_noise
            )));
        }
        Ok(Self {
            observation_noise: self.observation_noise.max(NOISE_FLOOR),
            ..self
        })
    }

    #[inline]
    pub fn kernel(&self, a: &Vec2, b: &Vec2) -> f64 {
        self.kernel_sq((a - b).norm_squared())
    }

    #[inline]
    fn kernel_sq(&self, r2: f64) -> f64 {
        self.output_scale * (-0.5 * r2 / (self.lengthscale * self.lengthscale)).exp()
    }

    fn noise_variance(&self) -> f64 {
        self.observation_noise * self.observation_noise
    }
}

/// `output_scale · exp(−‖a−b‖² / 2ℓ²)`.
pub fn rbf_kernel(a: &Vec2, b: &Vec2, params: &KernelParams) -> f64 {
    params.kernel(a, b)
}

/// `K(X, X) + o_n² I`.
pub fn kernel_matrix(points: &[Vec2], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = params.kernel(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += params.noise_variance();
    }
    k
}

/// Posterior at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean_t: f64,
    pub mean_d: f64,
    pub variance: f64,
    pub grad_mean_t: Vec2,
    pub grad_mean_d: Vec2,
    pub grad_variance: Vec2,
}

/// One trained single-output regression.
#[derive(Debug, Clone)]
pub struct ScalarGp {
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    /// `(K + o_n² I)⁻¹`, used for batched variance queries.
    precision: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl ScalarGp {
    pub fn train(points: &[Vec2], y: &[f64], params: KernelParams) -> Result<Self> {
        let params = params.validated()?;
        let k = kernel_matrix(points, &params);
        let chol = Cholesky::new(k).ok_or(Error::NonPositiveDefinite)?;
        let alpha = chol.solve(&DVector::from_column_slice(y));
        let precision = precision_from_cholesky(&chol);
        Ok(Self {
            params,
            chol,
            precision,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + o_n² I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }
}

fn precision_from_cholesky(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let l = chol.l();
    let n = l.nrows();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("cholesky factor has a positive diagonal");
    let mut p = l_inv.transpose() * &l_inv;
    // symmetrise rounding
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    p
}

/// Trained two-output regression.
#[derive(Debug, Clone)]
pub struct GprModel {
    training: TrainingSet,
    traversability: ScalarGp,
    distance: ScalarGp,
}

/// Factorises both kernel matrices and precomputes the solve vectors.
pub fn train(
    training: TrainingSet,
    params_t: KernelParams,
    params_d: KernelParams,
) -> Result<GprModel> {
    GprModel::train(training, params_t, params_d)
}

impl GprModel {
    pub fn train(
        training: TrainingSet,
        params_t: KernelParams,
        params_d: KernelParams,
    ) -> Result<Self> {
        let traversability =
            ScalarGp::train(training.points(), training.traversability(), params_t)?;
        let distance = ScalarGp::train(training.points(), training.obstacle_distance(), params_d)?;
        Ok(Self {
            training,
            traversability,
            distance,
        })
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn gp(&self, target: Target) -> &ScalarGp {
        match target {
            Target::Traversability => &self.traversability,
            Target::ObstacleDistance => &self.distance,
        }
    }

    pub fn params_t(&self) -> &KernelParams {
        &self.traversability.params
    }

    pub fn params_d(&self) -> &KernelParams {
        &self.distance.params
    }

    pub fn infer(&self, q: &Vec2) -> Posterior {
        let xs = self.training.points();
        let pt = &self.traversability.params;
        let pd = &self.distance.params;
        let inv_l2_t = 1.0 / (pt.lengthscale * pt.lengthscale);
        let inv_l2_d = 1.0 / (pd.lengthscale * pd.lengthscale);

        let k_t = DVector::from_iterator(xs.len(), xs.iter().map(|x| pt.kernel(q, x)));
        let v = &self.traversability.precision * &k_t;

        let mut post = Posterior {
            mean_t: 0.0,
            mean_d: 0.0,
            variance: pt.output_scale - k_t.dot(&v),
            grad_mean_t: Vec2::zeros(),
            grad_mean_d: Vec2::zeros(),
            grad_variance: Vec2::zeros(),
        };
        let alpha_t = &self.traversability.alpha;
        let alpha_d = &self.distance.alpha;
        for (i, x) in xs.iter().enumerate() {
            let diff = q - x;
            // ∂k/∂q = −(q − x)/ℓ² · k
            let dk_t = diff * (-inv_l2_t * k_t[i]);
            post.mean_t += alpha_t[i] * k_t[i];
            post.grad_mean_t += dk_t * alpha_t[i];
            post.grad_variance -= dk_t * (2.0 * v[i]);

            let kd = pd.kernel(q, x);
            post.mean_d += alpha_d[i] * kd;
            post.grad_mean_d += diff * (-inv_l2_d * kd * alpha_d[i]);
        }
        post.variance = clamp_variance(post.variance);
        post
    }

    /// Same results as [`GprModel::infer`] on every element; the variance
    /// solves are done as one matrix product per chunk of queries.
    pub fn infer_batch(&self, qs: &[Vec2]) -> Vec<Posterior> {
        let mut out = Vec::with_capacity(qs.len());
        for chunk in qs.chunks(QUERY_CHUNK) {
            self.infer_chunk(chunk, &mut out);
        }
        out
    }

    fn infer_chunk(&self, qs: &[Vec2], out: &mut Vec<Posterior>) {
        let xs = self.training.points();
        let n = xs.len();
        let pt = &self.traversability.params;
        let pd = &self.distance.params;
        let inv_l2_t = 1.0 / (pt.lengthscale * pt.lengthscale);
        let inv_l2_d = 1.0 / (pd.lengthscale * pd.lengthscale);

        let k_t = DMatrix::from_fn(n, qs.len(), |i, j| pt.kernel(&qs[j], &xs[i]));
        let v = &self.traversability.precision * &k_t;
        let alpha_t = &self.traversability.alpha;
        let alpha_d = &self.distance.alpha;

        for (j, q) in qs.iter().enumerate() {
            let kcol = k_t.column(j);
            let vcol = v.column(j);
            let mut post = Posterior {
                mean_t: 0.0,
                mean_d: 0.0,
                variance: pt.output_scale - kcol.dot(&vcol),
                grad_mean_t: Vec2::zeros(),
                grad_mean_d: Vec2::zeros(),
                grad_variance: Vec2::zeros(),
            };
            for (i, x) in xs.iter().enumerate() {
                let diff = q - x;
                let dk_t = diff * (-inv_l2_t * kcol[i]);
                post.mean_t += alpha_t[i] * kcol[i];
                post.grad_mean_t += dk_t * alpha_t[i];
                post.grad_variance -= dk_t * (2.0 * vcol[i]);

                let kd = pd.kernel(q, x);
                post.mean_d += alpha_d[i] * kd;
                post.grad_mean_d += diff * (-inv_l2_d * kd * alpha_d[i]);
            }
            post.variance = clamp_variance(post.variance);
            out.push(post);
        }
    }

    /// Posterior mean of the obstacle distance, without variance work.
    pub fn mean_distance(&self, q: &Vec2) -> f64 {
        let pd = &self.distance.params;
        self.training
            .points()
            .iter()
            .zip(self.distance.alpha.iter())
            .map(|(x, a)| a * pd.kernel(q, x))
            .sum()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            points: self.training.points().iter().map(|p| [p.x, p.y]).collect(),
            traversability: self.training.traversability().to_vec(),
            obstacle_distance: self.training.obstacle_distance().to_vec(),
            params_t: self.traversability.params,
            params_d: self.distance.params,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let training = TrainingSet::new(
            file.points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            file.traversability,
            file.obstacle_distance,
        )?;
        Self::train(training, file.params_t, file.params_d)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Field for GprModel {
    fn infer(&self, q: &Vec2) -> Posterior {
        GprModel::infer(self, q)
    }

    fn infer_batch(&self, qs: &[Vec2]) -> Vec<Posterior> {
        GprModel::infer_batch(self, qs)
    }

    fn mean_distance(&self, q: &Vec2) -> f64 {
        GprModel::mean_distance(self, q)
    }
}

fn clamp_variance(v: f64) -> f64 {
    if v < 0.0 {
        debug_assert!(v >= -1e-6, "variance {v} far below zero");
        0.0
    } else {
        v
    }
}

/// On-disk model: training data and hyperparameters. Factorisations are
/// recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub points: Vec<[f64; 2]>,
    pub traversability: Vec<f64>,
    pub obstacle_distance: Vec<f64>,
    #[serde(rename = "params_T")]
    pub params_t: KernelParams,
    #[serde(rename = "params_d")]
    pub params_d: KernelParams,
}

// ---------------------------------------------------------------------------
// Hyperparameter fitting
// ---------------------------------------------------------------------------

/// Gradient-descent settings for [`fit_hyperparameters_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Initial step in log-parameter space.
    pub step: f64,
    /// Stop once an accepted step improves the NLML by less than this.
    pub tolerance: f64,
    pub fit_noise: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            step: 0.05,
            tolerance: 1e-6,
            fit_noise: true,
        }
    }
}

const LOG_BOUNDS: [(f64, f64); 3] = [
    // lengthscale
    (-6.907_755_278_982_137, 6.907_755_278_982_137),
    // output scale
    (-13.815_510_557_964_274, 13.815_510_557_964_274),
    // noise, floor at NOISE_FLOOR
    (-13.815_510_557_964_274, 6.907_755_278_982_137),
];
const MAX_HALVINGS: usize = 40;

/// Result of [`fit_scalar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub params: KernelParams,
    pub nlml: f64,
    pub iterations: usize,
}

/// Negative log marginal likelihood of `y` under `params`.
pub fn nlml(points: &[Vec2], y: &[f64], params: &KernelParams) -> Result<f64> {
    let params = params.validated()?;
    let sq = pairwise_sq_distances(points);
    Ok(NlmlEval::new(&sq, y, &params)?.value)
}

/// Fits the hyperparameters of one output with the default [`FitConfig`].
pub fn fit_hyperparameters(
    training: &TrainingSet,
    init: KernelParams,
    target: Target,
) -> Result<KernelParams> {
    fit_hyperparameters_with(training, init, target, &FitConfig::default())
}

pub fn fit_hyperparameters_with(
    training: &TrainingSet,
    init: KernelParams,
    target: Target,
    cfg: &FitConfig,
) -> Result<KernelParams> {
    if training.len() < 2 {
        return Err(Error::InvalidTrainingSet(
            "hyperparameter fitting needs at least 2 points".into(),
        ));
    }
    Ok(fit_scalar(training.points(), training.targets(target), init, cfg)?.params)
}

/// Descends the NLML in log-parameter space. The step doubles after each
/// accepted move and halves whenever a candidate either fails to factorise or
/// does not decrease the NLML, so the returned NLML never exceeds the initial
/// one.
pub fn fit_scalar(
    points: &[Vec2],
    y: &[f64],
    init: KernelParams,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    let init = init.validated()?;
    let sq = pairwise_sq_distances(points);
    let mut theta = [
        init.lengthscale.ln(),
        init.output_scale.ln(),
        init.observation_noise.ln(),
    ];
    let mut current = NlmlEval::new(&sq, y, &init)?;
    let mut step = cfg.step;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut grad = current.gradient(&sq);
        if !cfg.fit_noise {
            grad[2] = 0.0;
        }
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut cand = theta;
            for k in 0..3 {
                cand[k] = (theta[k] - step * grad[k]).clamp(LOG_BOUNDS[k].0, LOG_BOUNDS[k].1);
            }
            if cand == theta {
                break;
            }
            let params = KernelParams {
                lengthscale: cand[0].exp(),
                output_scale: cand[1].exp(),
                observation_noise: cand[2].exp().max(NOISE_FLOOR),
            };
            match NlmlEval::new(&sq, y, &params) {
                Ok(eval) if eval.value < current.value => {
                    accepted = Some((cand, eval));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((cand, eval)) = accepted else { break };
        let improvement = current.value - eval.value;
        theta = cand;
        current = eval;
        step *= 2.0;
        if improvement < cfg.tolerance {
            break;
        }
    }

    Ok(FitOutcome {
        params: current.params,
        nlml: current.value,
        iterations,
    })
}

fn pairwise_sq_distances(points: &[Vec2]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).norm_squared())
}

struct NlmlEval {
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    value: f64,
}

impl NlmlEval {
    fn new(sq: &DMatrix<f64>, y: &[f64], params: &KernelParams) -> Result<Self> {
        let n = y.len();
        let mut k = sq.map(|r2| params.kernel_sq(r2));
        for i in 0..n {
            k[(i, i)] += params.noise_variance();
        }
        let chol = Cholesky::new(k).ok_or(Error::NonPositiveDefinite)?;
        let y = DVector::from_column_slice(y);
        let alpha = chol.solve(&y);
        let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let value = 0.5 * y.dot(&alpha) + half_log_det + 0.5 * n as f64 * (2.0 * PI).ln();
        if !value.is_finite() {
            return Err(Error::NonPositiveDefinite);
        }
        Ok(Self {
            params: *params,
            chol,
            alpha,
            value,
        })
    }

    /// Gradient w.r.t. (log ℓ, log output_scale, log o_n):
    /// `½ tr((K⁻¹ − ααᵀ) ∂K/∂θ)`.
    fn gradient(&self, sq: &DMatrix<f64>) -> [f64; 3] {
        let k_inv = precision_from_cholesky(&self.chol);
        let n = sq.nrows();
        let inv_l2 = 1.0 / (self.params.lengthscale * self.params.lengthscale);
        let mut g = [0.0; 3];
        for j in 0..n {
            for i in 0..n {
                let w = k_inv[(i, j)] - self.alpha[i] * self.alpha[j];
                let kr = self.params.kernel_sq(sq[(i, j)]);
                g[0] += w * kr * sq[(i, j)] * inv_l2;
                g[1] += w * kr;
            }
            let w = k_inv[(j, j)] - self.alpha[j] * self.alpha[j];
            g[2] += w * 2.0 * self.params.noise_variance();
        }
        g.map(|v| 0.5 * v)
    }
}
