//! End-to-end benchmark: generate maps, train the regressions, run the five
//! planning methods on random start/goal pairs and collect path metrics.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bco::{self, BcoConfig, LossBreakdown, OptimisationTrace};
use crate::bezier::{curvature_from_derivatives, sample_count, ControlPolygon};
use crate::envgen::{self, EnvironmentMap, PairSelection};
use crate::field::Field;
use crate::gp::{self, FitConfig, Target};
use crate::grid::{self, AstarConfig, DiscreteGrid};
use crate::trrt::{self, TrrtConfig};
use crate::{clamp_traversability, robust_ceil, Error, GprModel, KernelParams, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Astar,
    Trrt,
    BcoNone,
    BcoAstar,
    BcoTrrt,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Astar,
        Method::Trrt,
        Method::BcoNone,
        Method::BcoAstar,
        Method::BcoTrrt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Astar => "astar",
            Method::Trrt => "trrt",
            Method::BcoNone => "bco_none",
            Method::BcoAstar => "bco_astar",
            Method::BcoTrrt => "bco_trrt",
        }
    }

    pub fn is_bco(&self) -> bool {
        matches!(self, Method::BcoNone | Method::BcoAstar | Method::BcoTrrt)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "astar" => Ok(Method::Astar),
            "trrt" => Ok(Method::Trrt),
            "bco_none" => Ok(Method::BcoNone),
            "bco_astar" => Ok(Method::BcoAstar),
            "bco_trrt" => Ok(Method::BcoTrrt),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AstarSection {
    pub resolution: f64,
    pub heuristic_weight: f64,
    pub snap_cells: f64,
}

impl Default for AstarSection {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            heuristic_weight: 1.5,
            snap_cells: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrrtSection {
    pub step: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
    /// Defaults to `1e-2 · f_sigma` when absent.
    pub temperature_init: Option<f64>,
    pub temp_rate: f64,
    pub n_fail_max: usize,
    pub collision_check_res: f64,
}

impl Default for TrrtSection {
    fn default() -> Self {
        let d = TrrtConfig::default();
        Self {
            step: d.step,
            goal_bias: d.goal_bias,
            max_iterations: d.max_iterations,
            temperature_init: None,
            temp_rate: d.temp_rate,
            n_fail_max: d.n_fail_max,
            collision_check_res: d.collision_check_res,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcoSection {
    pub f_o: f64,
    pub f_c: f64,
    pub r0: f64,
    pub lr: f64,
    pub res: f64,
    pub cpr: f64,
    pub max_iter: usize,
    pub early_stop_tol: f64,
    pub patience: usize,
}

impl Default for BcoSection {
    fn default() -> Self {
        let d = BcoConfig::default();
        Self {
            f_o: d.f_o,
            f_c: d.f_c,
            r0: d.r0,
            lr: d.lr,
            res: d.res,
            cpr: d.cpr,
            max_iter: d.max_iter,
            early_stop_tol: d.early_stop_tol,
            patience: d.patience,
        }
    }
}

/// Planner parameters. `safety_radius`, `f_t` and `f_sigma` are shared by
/// all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub safety_radius: f64,
    pub f_t: f64,
    pub f_sigma: f64,
    pub astar: AstarSection,
    pub trrt: TrrtSection,
    pub bco: BcoSection,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            safety_radius: 0.1,
            f_t: 10.0,
            f_sigma: 200.0,
            astar: AstarSection::default(),
            trrt: TrrtSection::default(),
            bco: BcoSection::default(),
        }
    }
}

impl PlannerConfig {
    pub fn astar_config(&self) -> AstarConfig {
        AstarConfig {
            f_t: self.f_t,
            f_sigma: self.f_sigma,
            heuristic_weight: self.astar.heuristic_weight,
            snap_cells: self.astar.snap_cells,
        }
    }

    pub fn trrt_config(&self) -> TrrtConfig {
        let t = &self.trrt;
        TrrtConfig {
            step: t.step,
            goal_bias: t.goal_bias,
            max_iterations: t.max_iterations,
            temperature_init: t.temperature_init.unwrap_or(1e-2 * self.f_sigma),
            temp_rate: t.temp_rate,
            n_fail_max: t.n_fail_max,
            f_t: self.f_t,
            f_sigma: self.f_sigma,
            safety_radius: self.safety_radius,
            collision_check_res: t.collision_check_res,
        }
    }

    pub fn bco_config(&self) -> BcoConfig {
        let b = &self.bco;
        BcoConfig {
            f_t: self.f_t,
            f_sigma: self.f_sigma,
            f_o: b.f_o,
            f_c: b.f_c,
            safety_radius: self.safety_radius,
            r0: b.r0,
            lr: b.lr,
            res: b.res,
            cpr: b.cpr,
            max_iter: b.max_iter,
            early_stop_tol: b.early_stop_tol,
            patience: b.patience,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            res: self.bco.res,
            safety_radius: self.safety_radius,
            r0: self.bco.r0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.astar.resolution > 0.0 && self.astar.heuristic_weight >= 1.0) {
            return Err(Error::InvalidConfig(
                "astar: resolution must be positive and heuristic_weight >= 1".into(),
            ));
        }
        self.trrt_config().validate()?;
        self.bco_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub n_maps: usize,
    pub pairs_per_map: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub output_dir: Option<PathBuf>,
    pub training_points: usize,
    pub ablation_discs: usize,
    pub ablation_radius: f64,
    pub min_pair_separation: f64,
    pub fit: FitConfig,
    pub planner: PlannerConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n_maps: 10,
            pairs_per_map: 20,
            master_seed: 0,
            jobs: 0,
            output_dir: None,
            training_points: 500,
            ablation_discs: 3,
            ablation_radius: 1.5,
            min_pair_separation: 2.0,
            fit: FitConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_maps == 0 || self.pairs_per_map == 0 {
            return Err(Error::InvalidConfig(
                "n_maps and pairs_per_map must be >= 1".into(),
            ));
        }
        if self.training_points < 2 {
            return Err(Error::InvalidConfig("training_points must be >= 2".into()));
        }
        self.planner.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

// ---------------------------------------------------------------------------
// Path evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub res: f64,
    pub safety_radius: f64,
    pub r0: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        PlannerConfig::default().eval_config()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PathGeometry<'a> {
    Polyline(&'a [Vec2]),
    Bezier(&'a ControlPolygon),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub length_m: f64,
    pub mean_traversability: f64,
    pub mean_variance: f64,
    pub curvature_violated: bool,
    pub collided: bool,
}

/// Polyline vertices with a turning angle above this count as curvature
/// violations.
pub const TURN_ANGLE_TOLERANCE: f64 = 1e-6;

/// Samples a path every `res` metres of arc length and summarises it.
pub fn evaluate_path<F: Field + ?Sized>(
    model: &F,
    path: PathGeometry<'_>,
    cfg: &EvalConfig,
) -> Result<PathMetrics> {
    let (length, samples, curvature_violated) = match path {
        PathGeometry::Polyline(pts) => {
            let pts = dedup(pts);
            if pts.is_empty() {
                return Err(Error::EmptyPath);
            }
            let mut samples = vec![pts[0]];
            let mut length = 0.0;
            for w in pts.windows(2) {
                let len = (w[1] - w[0]).norm();
                length += len;
                let k = robust_ceil(len / cfg.res).max(1);
                samples.extend((1..=k).map(|j| w[0] + (w[1] - w[0]) * (j as f64 / k as f64)));
            }
            let turned = pts.windows(3).any(|w| {
                let a = w[1] - w[0];
                let b = w[2] - w[1];
                let angle = (a.x * b.y - a.y * b.x).abs().atan2(a.dot(&b));
                angle > TURN_ANGLE_TOLERANCE
            });
            (length, samples, turned)
        }
        PathGeometry::Bezier(p) => {
            let (length, ts) = arc_length_parameters(p, cfg.res);
            let kappa_max = 1.0 / cfg.r0;
            let mut violated = false;
            let samples = ts
                .iter()
                .map(|&t| {
                    let (d1, d2) = p.derivatives_at(t);
                    let k = curvature_from_derivatives(&d1, &d2);
                    if !k.degenerate && k.value > kappa_max {
                        violated = true;
                    }
                    p.point_at(t)
                })
                .collect();
            (length, samples, violated)
        }
    };
    let posts = model.infer_batch(&samples);
    let n = posts.len() as f64;
    Ok(PathMetrics {
        length_m: length,
        mean_traversability: posts
            .iter()
            .map(|p| clamp_traversability(p.mean_t))
            .sum::<f64>()
            / n,
        mean_variance: posts.iter().map(|p| p.variance).sum::<f64>() / n,
        curvature_violated,
        collided: posts.iter().any(|p| p.mean_d <= cfg.safety_radius),
    })
}

fn dedup(pts: &[Vec2]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q| (p - q).norm() > 1e-12) {
            out.push(*p);
        }
    }
    out
}

/// Fine-polyline arc length of a curve and the parameters of points spaced
/// `res` apart along it (both ends included).
pub fn arc_length_parameters(p: &ControlPolygon, res: f64) -> (f64, Vec<f64>) {
    let fine = (8 * sample_count(p, res)).max(256);
    let mut cum = Vec::with_capacity(fine + 1);
    cum.push(0.0);
    let mut prev = p.first();
    for k in 1..=fine {
        let q = p.point_at(k as f64 / fine as f64);
        cum.push(cum[k - 1] + (q - prev).norm());
        prev = q;
    }
    let length = cum[fine];
    let m = robust_ceil(length / res).max(1);
    let mut ts = Vec::with_capacity(m + 1);
    let mut seg = 0;
    for j in 0..=m {
        let target = length * j as f64 / m as f64;
        while seg + 1 < fine && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let u = if span > 0.0 {
            ((target - cum[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ts.push(((seg as f64 + u) / fine as f64).min(1.0));
    }
    ts[m] = 1.0;
    (length, ts)
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// One (map, pair, method) result. Column order matches `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub map_seed: u64,
    pub pair_index: usize,
    pub method: Method,
    pub compute_time_s: f64,
    pub length_m: Option<f64>,
    pub mean_traversability: Option<f64>,
    pub mean_variance: Option<f64>,
    pub curvature_violated: Option<bool>,
    pub collided: Option<bool>,
    pub final_loss: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
}

impl BenchmarkRecord {
    fn failed(map_seed: u64, pair_index: usize, method: Method, time: f64, status: &str) -> Self {
        Self {
            map_seed,
            pair_index,
            method,
            compute_time_s: time,
            length_m: None,
            mean_traversability: None,
            mean_variance: None,
            curvature_violated: None,
            collided: None,
            final_loss: None,
            iterations: None,
            status: status.to_string(),
        }
    }

    fn with_metrics(mut self, m: &PathMetrics) -> Self {
        self.length_m = Some(m.length_m);
        self.mean_traversability = Some(m.mean_traversability);
        self.mean_variance = Some(m.mean_variance);
        self.curvature_violated = Some(m.curvature_violated);
        self.collided = Some(m.collided);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Equality of every field except the wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            compute_time_s: 0.0,
            ..r.clone()
        };
        let (a, b) = (strip(self), strip(other));
        a.map_seed == b.map_seed
            && a.pair_index == b.pair_index
            && a.method == b.method
            && bits(a.length_m) == bits(b.length_m)
            && bits(a.mean_traversability) == bits(b.mean_traversability)
            && bits(a.mean_variance) == bits(b.mean_variance)
            && a.curvature_violated == b.curvature_violated
            && a.collided == b.collided
            && bits(a.final_loss) == bits(b.final_loss)
            && a.iterations == b.iterations
            && a.status == b.status
    }
}

fn bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

/// Per-iteration losses of one BCO run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub map_seed: u64,
    pub pair_index: usize,
    pub method: Method,
    pub losses: Vec<LossBreakdown>,
}

impl TraceRecord {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.json", self.map_seed, self.pair_index, self.method)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Option<Method>,
    pub records: usize,
    pub ok: usize,
    pub mean_compute_time_s: f64,
    pub mean_length_m: f64,
    pub mean_traversability: f64,
    pub mean_variance: f64,
    pub curvature_violations: usize,
    pub collisions: usize,
    pub mean_final_loss: Option<f64>,
    pub mean_iterations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_maps: usize,
    pub pairs_per_map: usize,
    pub master_seed: u64,
    pub methods: Vec<MethodSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Means over `ok` records, counts over records that carry the flag.
pub fn summarise(records: &[BenchmarkRecord], cfg: &SuiteConfig) -> Summary {
    let methods = Method::ALL
        .iter()
        .map(|&m| {
            let all: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.method == m).collect();
            let ok: Vec<&BenchmarkRecord> = all.iter().copied().filter(|r| r.is_ok()).collect();
            MethodSummary {
                method: Some(m),
                records: all.len(),
                ok: ok.len(),
                mean_compute_time_s: mean(ok.iter().map(|r| r.compute_time_s)).unwrap_or(0.0),
                mean_length_m: mean(ok.iter().filter_map(|r| r.length_m)).unwrap_or(0.0),
                mean_traversability: mean(ok.iter().filter_map(|r| r.mean_traversability))
                    .unwrap_or(0.0),
                mean_variance: mean(ok.iter().filter_map(|r| r.mean_variance)).unwrap_or(0.0),
                curvature_violations: ok
                    .iter()
                    .filter(|r| r.curvature_violated == Some(true))
                    .count(),
                collisions: ok.iter().filter(|r| r.collided == Some(true)).count(),
                mean_final_loss: mean(ok.iter().filter_map(|r| r.final_loss)),
                mean_iterations: mean(ok.iter().filter_map(|r| r.iterations.map(|i| i as f64))),
            }
        })
        .collect();
    Summary {
        n_maps: cfg.n_maps,
        pairs_per_map: cfg.pairs_per_map,
        master_seed: cfg.master_seed,
        methods,
    }
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

/// Everything a map contributes to the benchmark.
#[derive(Debug, Clone)]
pub struct PreparedMap {
    pub map: EnvironmentMap,
    pub model: GprModel,
    pub grid: DiscreteGrid,
    pub pairs: Vec<(Vec2, Vec2)>,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub records: Vec<BenchmarkRecord>,
    pub traces: Vec<TraceRecord>,
    pub summary: Summary,
}

/// splitmix64 finaliser applied to `seed + stream · φ`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn map_seeds(cfg: &SuiteConfig) -> Vec<u64> {
    (0..cfg.n_maps as u64)
        .map(|i| derive_seed(cfg.master_seed, i))
        .collect()
}

fn initial_params(y: &[f64]) -> KernelParams {
    let second_moment = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    KernelParams {
        lengthscale: 1.0,
        output_scale: second_moment.max(1e-3),
        observation_noise: 0.1 * second_moment.sqrt().max(1e-3),
    }
}

/// Fits both outputs' hyperparameters and trains the model.
pub fn fit_and_train(training: crate::TrainingSet, fit: &FitConfig) -> Result<GprModel> {
    let init_t = initial_params(training.traversability());
    let init_d = initial_params(training.obstacle_distance());
    let params_t = gp::fit_hyperparameters_with(&training, init_t, Target::Traversability, fit)?;
    let params_d = gp::fit_hyperparameters_with(&training, init_d, Target::ObstacleDistance, fit)?;
    GprModel::train(training, params_t, params_d)
}

/// Map generation, training-set sampling and ablation, fitting, grid
/// construction and pair selection for one map seed.
pub fn prepare_map(map_seed: u64, cfg: &SuiteConfig) -> Result<PreparedMap> {
    let map = envgen::generate_map(map_seed);
    let training =
        envgen::sample_training_set(&map, cfg.training_points, derive_seed(map_seed, 1))?;
    let training = envgen::ablate(
        &training,
        derive_seed(map_seed, 2),
        cfg.ablation_discs,
        cfg.ablation_radius,
    );
    let model = fit_and_train(training, &cfg.fit)?;
    let planner = &cfg.planner;
    let grid = grid::build_grid(
        &model,
        &map.bounds(),
        planner.astar.resolution,
        planner.safety_radius,
    )?;
    let selection = PairSelection {
        safety_radius: planner.safety_radius,
        min_separation: cfg.min_pair_separation,
    };
    let pairs = envgen::select_pairs(
        &map,
        &model,
        &grid,
        &planner.astar_config(),
        &selection,
        cfg.pairs_per_map,
        derive_seed(map_seed, 3),
    )?;
    Ok(PreparedMap {
        map,
        model,
        grid,
        pairs,
    })
}

/// Output of one method on one pair.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub status: std::result::Result<(), &'static str>,
    pub time_s: f64,
    pub waypoints: Vec<Vec2>,
    pub curve: Option<OptimisationTrace>,
}

/// Polyline from `s` to `g` through the planner's waypoints.
fn anchored(s: &Vec2, g: &Vec2, waypoints: &[Vec2]) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(waypoints.len() + 2);
    out.push(*s);
    out.extend_from_slice(waypoints);
    out.push(*g);
    dedup(&out)
}

/// Runs all five methods on one pair. Seeded BCO times include the prior's.
pub fn run_pair(
    prepared: &PreparedMap,
    pair_index: usize,
    planner: &PlannerConfig,
) -> Vec<MethodRun> {
    let (s, g) = prepared.pairs[pair_index];
    let model = &prepared.model;
    let bounds = prepared.map.bounds();
    let bco_cfg = planner.bco_config();

    let t0 = Instant::now();
    let astar = grid::astar(&prepared.grid, &s, &g, &planner.astar_config())
        .map(|p| anchored(&s, &g, &p.waypoints));
    let astar_time = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let trrt_seed = derive_seed(prepared.map.seed, 1000 + pair_index as u64);
    let trrt = trrt::plan(model, &s, &g, &bounds, &planner.trrt_config(), trrt_seed)
        .map(|p| p.waypoints);
    let trrt_time = t0.elapsed().as_secs_f64();

    let polyline_run = |method, res: &Result<Vec<Vec2>>, time| MethodRun {
        method,
        status: res.as_ref().map(|_| ()).map_err(Error::status),
        time_s: time,
        waypoints: res.as_ref().cloned().unwrap_or_default(),
        curve: None,
    };

    let bco_run = |method, prior: Option<&Result<Vec<Vec2>>>, prior_time: f64| {
        let t0 = Instant::now();
        let init = match prior {
            None => bco::init_priorless(&s, &g, bco_cfg.cpr),
            Some(Ok(path)) => bco::init_from_prior(path, bco_cfg.cpr),
            Some(Err(_)) => {
                return MethodRun {
                    method,
                    status: Err("prior_failed"),
                    time_s: prior_time,
                    waypoints: Vec::new(),
                    curve: None,
                }
            }
        };
        match init {
            Ok(p0) => {
                let trace = bco::optimise(model, &p0, &bco_cfg);
                MethodRun {
                    method,
                    status: Ok(()),
                    time_s: prior_time + t0.elapsed().as_secs_f64(),
                    waypoints: trace.polygon.points().to_vec(),
                    curve: Some(trace),
                }
            }
            Err(e) => MethodRun {
                method,
                status: Err(e.status()),
                time_s: prior_time + t0.elapsed().as_secs_f64(),
                waypoints: Vec::new(),
                curve: None,
            },
        }
    };

    vec![
        polyline_run(Method::Astar, &astar, astar_time),
        polyline_run(Method::Trrt, &trrt, trrt_time),
        bco_run(Method::BcoNone, None, 0.0),
        bco_run(Method::BcoAstar, Some(&astar), astar_time),
        bco_run(Method::BcoTrrt, Some(&trrt), trrt_time),
    ]
}

/// Result of planning a single query outside the benchmark.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub method: Method,
    /// Polyline waypoints, or the optimised control points for BCO.
    pub waypoints: Vec<Vec2>,
    pub curve: Option<OptimisationTrace>,
    pub metrics: PathMetrics,
    pub time_s: f64,
}

impl PlanOutcome {
    /// Points tracing the path, `res` apart along BCO curves.
    pub fn trace_points(&self, res: f64) -> Vec<Vec2> {
        match &self.curve {
            Some(c) => arc_length_parameters(&c.polygon, res)
                .1
                .iter()
                .map(|&t| c.polygon.point_at(t))
                .collect(),
            None => self.waypoints.clone(),
        }
    }
}

/// Plans one query with one method. Seeded BCO times include the prior's.
pub fn plan_single(
    model: &GprModel,
    bounds: &crate::Bounds,
    method: Method,
    s: &Vec2,
    g: &Vec2,
    planner: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome> {
    planner.validate()?;
    let t0 = Instant::now();
    let astar_path = || -> Result<Vec<Vec2>> {
        let grid = grid::build_grid(
            model,
            bounds,
            planner.astar.resolution,
            planner.safety_radius,
        )?;
        let p = grid::astar(&grid, s, g, &planner.astar_config())?;
        Ok(anchored(s, g, &p.waypoints))
    };
    let trrt_path =
        || trrt::plan(model, s, g, bounds, &planner.trrt_config(), seed).map(|p| p.waypoints);
    let bco_cfg = planner.bco_config();
    let (waypoints, curve) = match method {
        Method::Astar => (astar_path()?, None),
        Method::Trrt => (trrt_path()?, None),
        Method::BcoNone | Method::BcoAstar | Method::BcoTrrt => {
            let p0 = match method {
                Method::BcoAstar => bco::init_from_prior(&astar_path()?, bco_cfg.cpr)?,
                Method::BcoTrrt => bco::init_from_prior(&trrt_path()?, bco_cfg.cpr)?,
                _ => bco::init_priorless(s, g, bco_cfg.cpr)?,
            };
            let trace = bco::optimise(model, &p0, &bco_cfg);
            (trace.polygon.points().to_vec(), Some(trace))
        }
    };
    let time_s = t0.elapsed().as_secs_f64();
    let eval = planner.eval_config();
    let metrics = match &curve {
        Some(c) => evaluate_path(model, PathGeometry::Bezier(&c.polygon), &eval)?,
        None => evaluate_path(model, PathGeometry::Polyline(&waypoints), &eval)?,
    };
    Ok(PlanOutcome {
        method,
        waypoints,
        curve,
        metrics,
        time_s,
    })
}

fn record_for(
    prepared: &PreparedMap,
    pair_index: usize,
    run: &MethodRun,
    eval: &EvalConfig,
) -> (BenchmarkRecord, Option<TraceRecord>) {
    let seed = prepared.map.seed;
    if let Err(status) = run.status {
        return (
            BenchmarkRecord::failed(seed, pair_index, run.method, run.time_s, status),
            None,
        );
    }
    let base = BenchmarkRecord::failed(seed, pair_index, run.method, run.time_s, "ok");
    let metrics = match &run.curve {
        Some(trace) => evaluate_path(&prepared.model, PathGeometry::Bezier(&trace.polygon), eval),
        None => evaluate_path(&prepared.model, PathGeometry::Polyline(&run.waypoints), eval),
    };
    let mut record = match metrics {
        Ok(m) => base.with_metrics(&m),
        Err(e) => {
            return (
                BenchmarkRecord::failed(seed, pair_index, run.method, run.time_s, e.status()),
                None,
            )
        }
    };
    let trace = run.curve.as_ref().map(|trace| {
        record.final_loss = Some(trace.final_loss().total);
        record.iterations = Some(trace.iterations_run);
        TraceRecord {
            map_seed: seed,
            pair_index,
            method: run.method,
            losses: trace.losses.clone(),
        }
    });
    (record, trace)
}

fn failed_map_records(map_seed: u64, cfg: &SuiteConfig, err: &Error) -> Vec<BenchmarkRecord> {
    (0..cfg.pairs_per_map)
        .flat_map(|pair| {
            Method::ALL
                .iter()
                .map(move |&m| BenchmarkRecord::failed(map_seed, pair, m, 0.0, err.status()))
        })
        .collect()
}

/// Runs the whole benchmark and, when `output_dir` is set, writes
/// `records.csv`, `summary.json` and `traces/*.json` there.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let seeds = map_seeds(cfg);
    let eval = cfg.planner.eval_config();

    let (mut records, mut traces) = pool.install(|| {
        let prepared: Vec<(u64, Result<PreparedMap>)> = seeds
            .par_iter()
            .map(|&seed| (seed, prepare_map(seed, cfg)))
            .collect();

        let mut records = Vec::new();
        let mut tasks = Vec::new();
        for (seed, p) in &prepared {
            match p {
                Ok(p) => tasks.extend((0..p.pairs.len()).map(|i| (p, i))),
                Err(e) => records.extend(failed_map_records(*seed, cfg, e)),
            }
        }
        let results: Vec<(BenchmarkRecord, Option<TraceRecord>)> = tasks
            .par_iter()
            .flat_map_iter(|&(p, i)| {
                run_pair(p, i, &cfg.planner)
                    .into_iter()
                    .map(move |run| record_for(p, i, &run, &eval))
            })
            .collect();
        let mut traces = Vec::new();
        for (r, t) in results {
            records.push(r);
            traces.extend(t);
        }
        (records, traces)
    });

    let order: std::collections::HashMap<u64, usize> =
        seeds.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    records.sort_by_key(|r| (order[&r.map_seed], r.pair_index, r.method));
    traces.sort_by_key(|t| (order[&t.map_seed], t.pair_index, t.method));
    let summary = summarise(&records, cfg);
    let result = SuiteResult {
        records,
        traces,
        summary,
    };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &result)?;
    }
    Ok(result)
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[BenchmarkRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for r in rd.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

pub fn write_outputs(dir: &Path, result: &SuiteResult) -> Result<()> {
    std::fs::create_dir_all(dir.join("traces"))?;
    write_records_csv(dir.join("records.csv"), &result.records)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&result.summary)?,
    )?;
    for t in &result.traces {
        std::fs::write(
            dir.join("traces").join(t.file_name()),
            serde_json::to_string(&t.losses)?,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Posterior;

    struct Ideal;
    impl Field for Ideal {
        fn infer(&self, _q: &Vec2) -> Posterior {
            Posterior {
                mean_t: 1.0,
                mean_d: 5.0,
                variance: 0.0,
                grad_mean_t: Vec2::zeros(),
                grad_mean_d: Vec2::zeros(),
                grad_variance: Vec2::zeros(),
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("bco-astar".parse::<Method>().unwrap(), Method::BcoAstar);
        assert!("rrt_star".parse::<Method>().is_err());
    }

    #[test]
    fn straight_polyline_metrics() {
        let pts = [Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), Vec2::new(4.0, 1.0)];
        let m = evaluate_path(&Ideal, PathGeometry::Polyline(&pts), &EvalConfig::default())
            .unwrap();
        assert!((m.length_m - 3.0).abs() < 1e-12);
        assert!(!m.collided);
        assert!(!m.curvature_violated);
        assert_eq!(m.mean_traversability, 1.0);
    }

    #[test]
    fn turning_polyline_violates_curvature() {
        let pts = [Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), Vec2::new(2.0, 3.0)];
        let m = evaluate_path(&Ideal, PathGeometry::Polyline(&pts), &EvalConfig::default())
            .unwrap();
        assert!(m.curvature_violated);
        assert!(matches!(
            evaluate_path(&Ideal, PathGeometry::Polyline(&[]), &EvalConfig::default()),
            Err(Error::EmptyPath)
        ));
    }

    #[test]
    fn straight_bezier_metrics() {
        let p = bco::init_priorless(&Vec2::new(1.0, 1.0), &Vec2::new(5.0, 4.0), 0.5).unwrap();
        let m = evaluate_path(&Ideal, PathGeometry::Bezier(&p), &EvalConfig::default()).unwrap();
        assert!((m.length_m - 5.0).abs() < 1e-9);
        assert!(!m.curvature_violated);
        assert!(!m.collided);
    }

    #[test]
    fn arc_length_samples_are_even() {
        let p = ControlPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(3.0, 0.2),
            Vec2::new(3.0, 3.0),
        ])
        .unwrap();
        let (len, ts) = arc_length_parameters(&p, 0.1);
        assert_eq!(ts[0], 0.0);
        assert_eq!(*ts.last().unwrap(), 1.0);
        let pts: Vec<Vec2> = ts.iter().map(|&t| p.point_at(t)).collect();
        let spacing = len / (ts.len() - 1) as f64;
        for w in pts.windows(2) {
            assert!(((w[1] - w[0]).norm() - spacing).abs() < 0.02 * spacing);
        }
    }

    #[test]
    fn seeds_are_stable() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    #[test]
    fn config_json_overrides_table_values() {
        let cfg: SuiteConfig =
            serde_json::from_str(r#"{"n_maps": 2, "planner": {"f_sigma": 50, "bco": {"r0": 0.5}}}"#)
                .unwrap();
        assert_eq!(cfg.n_maps, 2);
        assert_eq!(cfg.pairs_per_map, 20);
        assert_eq!(cfg.planner.bco_config().f_sigma, 50.0);
        assert_eq!(cfg.planner.trrt_config().f_sigma, 50.0);
        assert_eq!(cfg.planner.trrt_config().temperature_init, 0.5);
        assert_eq!(cfg.planner.bco_config().r0, 0.5);
        assert_eq!(cfg.planner.bco_config().lr, 0.05);
        assert_eq!(cfg.planner.astar_config().f_t, 10.0);
    }
}
