//! Procedural ground-truth environments.
//!
//! A map is a square of 10×10 unit ground tiles with random traversability,
//! incrementally cluttered with axis-aligned rectangular obstacles until a
//! randomly drawn occupancy threshold is reached.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::grid::{astar, AstarConfig, DiscreteGrid};
use crate::{Bounds, Error, Result, TrainingSet, Vec2};

pub const MAP_SIDE: f64 = 10.0;
pub const TILES_PER_SIDE: usize = 10;
pub const OCCUPANCY_RANGE: (f64, f64) = (0.25, 0.5);
pub const OBSTACLE_SIZE_RANGE: (f64, f64) = (0.5, 2.5);
pub const OCCUPANCY_SAMPLES: usize = 100_000;
pub const MAX_REJECTIONS: usize = 1_000_000;
/// Ablation redraws the discs until at least this many points survive.
pub const MIN_SURVIVORS: usize = 50;

const MAX_ABLATION_ATTEMPTS: usize = 1000;

/// Axis-aligned obstacle rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn max(&self) -> [f64; 2] {
        [self.min[0] + self.width, self.min[1] + self.height]
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        let max = self.max();
        p.x >= self.min[0] && p.x <= max[0] && p.y >= self.min[1] && p.y <= max[1]
    }

    /// Euclidean distance from `p` to the rectangle, 0 inside.
    pub fn distance(&self, p: &Vec2) -> f64 {
        let max = self.max();
        let dx = (self.min[0] - p.x).max(0.0).max(p.x - max[0]);
        let dy = (self.min[1] - p.y).max(0.0).max(p.y - max[1]);
        dx.hypot(dy)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Synthetic ground-truth world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMap {
    pub seed: u64,
    pub side: f64,
    /// Row-major, `tiles[iy * 10 + ix]`.
    pub tiles: Vec<f64>,
    pub obstacles: Vec<Rect>,
    pub occupancy_threshold: f64,
}

impl EnvironmentMap {
    pub fn bounds(&self) -> Bounds {
        Bounds::square(self.side)
    }

    fn tile_size(&self) -> f64 {
        self.side / TILES_PER_SIDE as f64
    }

    /// Traversability of the tile containing `p`.
    pub fn traversability(&self, p: &Vec2) -> Result<f64> {
        self.check_bounds(p)?;
        let ts = self.tile_size();
        let last = TILES_PER_SIDE - 1;
        let ix = ((p.x / ts).floor() as usize).min(last);
        let iy = ((p.y / ts).floor() as usize).min(last);
        Ok(self.tiles[iy * TILES_PER_SIDE + ix])
    }

    /// Distance to the closest obstacle; the map border is not an obstacle.
    /// Infinite when the map has no obstacles.
    pub fn distance(&self, p: &Vec2) -> Result<f64> {
        self.check_bounds(p)?;
        Ok(self.raw_distance(p))
    }

    fn raw_distance(&self, p: &Vec2) -> f64 {
        self.obstacles
            .iter()
            .map(|r| r.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn check_bounds(&self, p: &Vec2) -> Result<()> {
        let eps = 1e-12;
        if p.x.is_finite()
            && p.y.is_finite()
            && p.x >= -eps
            && p.y >= -eps
            && p.x <= self.side + eps
            && p.y <= self.side + eps
        {
            Ok(())
        } else {
            Err(Error::OutOfBounds(p.x, p.y))
        }
    }

    /// Monte-Carlo estimate of the obstacle-covered fraction, using the same
    /// sample set as generation.
    pub fn occupancy_fraction(&self) -> f64 {
        let samples = occupancy_samples(self.seed, self.side);
        let hit = samples
            .iter()
            .filter(|p| self.obstacles.iter().any(|r| r.contains(p)))
            .count();
        hit as f64 / samples.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(s)?;
        if map.tiles.len() != TILES_PER_SIDE * TILES_PER_SIDE {
            return Err(Error::InvalidConfig(format!(
                "map needs {} tiles, got {}",
                TILES_PER_SIDE * TILES_PER_SIDE,
                map.tiles.len()
            )));
        }
        Ok(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn occupancy_samples(seed: u64, side: f64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..OCCUPANCY_SAMPLES)
        .map(|_| Vec2::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect()
}

/// Draws a map. Deterministic in `seed`.
pub fn generate_map(seed: u64) -> EnvironmentMap {
    let side = MAP_SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // random() is in [0, 1); flip it into (0, 1]
    let tiles = (0..TILES_PER_SIDE * TILES_PER_SIDE)
        .map(|_| 1.0 - rng.random::<f64>())
        .collect();
    let occupancy_threshold = rng.random_range(OCCUPANCY_RANGE.0..=OCCUPANCY_RANGE.1);

    let samples = occupancy_samples(seed, side);
    let mut covered = vec![false; samples.len()];
    let mut n_covered = 0usize;
    let mut obstacles = Vec::new();
    while (n_covered as f64) < occupancy_threshold * samples.len() as f64 {
        let width = rng.random_range(OBSTACLE_SIZE_RANGE.0..=OBSTACLE_SIZE_RANGE.1);
        let height = rng.random_range(OBSTACLE_SIZE_RANGE.0..=OBSTACLE_SIZE_RANGE.1);
        let rect = Rect {
            min: [
                rng.random::<f64>() * (side - width),
                rng.random::<f64>() * (side - height),
            ],
            width,
            height,
        };
        for (c, p) in covered.iter_mut().zip(&samples) {
            if !*c && rect.contains(p) {
                *c = true;
                n_covered += 1;
            }
        }
        obstacles.push(rect);
    }

    EnvironmentMap {
        seed,
        side,
        tiles,
        obstacles,
        occupancy_threshold,
    }
}

/// Exact distance from `p` to the closest obstacle of `map`.
pub fn point_distance(map: &EnvironmentMap, p: &Vec2) -> Result<f64> {
    map.distance(p)
}

/// `n` points drawn uniformly over free space by rejection, labelled with
/// their tile traversability and exact obstacle distance.
pub fn sample_training_set(map: &EnvironmentMap, n: usize, rng_seed: u64) -> Result<TrainingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut points = Vec::with_capacity(n);
    let mut trav = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n);
    let mut rejections = 0usize;
    while points.len() < n {
        let p = Vec2::new(
            rng.random::<f64>() * map.side,
            rng.random::<f64>() * map.side,
        );
        let d = map.raw_distance(&p);
        if d > 0.0 && d.is_finite() {
            trav.push(map.traversability(&p)?);
            dist.push(d);
            points.push(p);
        } else {
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::FreeSpaceTooSmall(rejections));
            }
        }
    }
    TrainingSet::new(points, trav, dist)
}

/// Removes every training point inside `discs` random discs of `radius`,
/// centred uniformly over the bounding box of the points. Discs are redrawn
/// while fewer than [`MIN_SURVIVORS`] points would remain.
pub fn ablate(training: &TrainingSet, rng_seed: u64, discs: usize, radius: f64) -> TrainingSet {
    match ablation_discs(training, rng_seed, discs, radius) {
        Some(centres) => training.filter(|p| outside_discs(p, &centres, radius)),
        None => training.clone(),
    }
}

/// Centres of the discs [`ablate`] removes, or `None` when it removes
/// nothing.
pub fn ablation_discs(
    training: &TrainingSet,
    rng_seed: u64,
    discs: usize,
    radius: f64,
) -> Option<Vec<Vec2>> {
    if discs == 0 || radius <= 0.0 || training.is_empty() {
        return None;
    }
    let pts = training.points();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let need = MIN_SURVIVORS.min(training.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..MAX_ABLATION_ATTEMPTS {
        let centres: Vec<Vec2> = (0..discs)
            .map(|_| {
                Vec2::new(
                    lo.x + rng.random::<f64>() * (hi.x - lo.x),
                    lo.y + rng.random::<f64>() * (hi.y - lo.y),
                )
            })
            .collect();
        let kept = pts.iter().filter(|p| outside_discs(p, &centres, radius)).count();
        if kept >= need {
            return Some(centres);
        }
    }
    None
}

fn outside_discs(p: &Vec2, centres: &[Vec2], radius: f64) -> bool {
    centres.iter().all(|c| (p - c).norm() > radius)
}

/// Settings for [`select_pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSelection {
    pub safety_radius: f64,
    pub min_separation: f64,
}

impl Default for PairSelection {
    fn default() -> Self {
        Self {
            safety_radius: 0.1,
            min_separation: 2.0,
        }
    }
}

/// Draws start/goal pairs in GP free space (`d̄ > R` at both ends) that are
/// joined by an A* path on `grid`.
#[allow(clippy::too_many_arguments)]
pub fn select_pairs<F: Field + ?Sized>(
    map: &EnvironmentMap,
    model: &F,
    grid: &DiscreteGrid,
    astar_cfg: &AstarConfig,
    selection: &PairSelection,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<(Vec2, Vec2)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pairs = Vec::with_capacity(n);
    let mut failures = 0usize;
    let budget = 10 * n;
    let draw = |rng: &mut ChaCha8Rng| {
        Vec2::new(
            rng.random::<f64>() * map.side,
            rng.random::<f64>() * map.side,
        )
    };
    while pairs.len() < n {
        let s = draw(&mut rng);
        let g = draw(&mut rng);
        let ok = (g - s).norm() >= selection.min_separation
            && model.mean_distance(&s) > selection.safety_radius
            && model.mean_distance(&g) > selection.safety_radius
            && astar(grid, &s, &g, astar_cfg).is_ok();
        if ok {
            pairs.push((s, g));
        } else {
            failures += 1;
            if failures >= budget {
                return Err(Error::PairBudgetExhausted {
                    found: pairs.len(),
                    wanted: n,
                });
            }
        }
    }
    Ok(pairs)
}
