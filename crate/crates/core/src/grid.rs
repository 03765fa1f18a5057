//! Informative weighted A* on a lattice whose node attributes come from the
//! GP posterior.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::{clamp_traversability, robust_ceil, Bounds, Error, Result, Vec2};

/// Lattice over the map with per-node posterior attributes.
#[derive(Debug, Clone)]
pub struct DiscreteGrid {
    origin: Vec2,
    resolution: f64,
    nx: usize,
    ny: usize,
    mean_t: Vec<f64>,
    mean_d: Vec<f64>,
    variance: Vec<f64>,
    blocked: Vec<bool>,
}

impl DiscreteGrid {
    /// Builds a grid from raw node attributes (index `iy * nx + ix`). A node is
    /// blocked iff `mean_d <= safety_radius`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fields(
        origin: Vec2,
        resolution: f64,
        nx: usize,
        ny: usize,
        mean_t: Vec<f64>,
        mean_d: Vec<f64>,
        variance: Vec<f64>,
        safety_radius: f64,
    ) -> Result<Self> {
        let n = nx * ny;
        if resolution <= 0.0 || n == 0 {
            return Err(Error::InvalidConfig("empty grid".into()));
        }
        if mean_t.len() != n || mean_d.len() != n || variance.len() != n {
            return Err(Error::InvalidConfig(format!(
                "grid of {nx}x{ny} needs {n} values per attribute"
            )));
        }
        let blocked = mean_d.iter().map(|d| *d <= safety_radius).collect();
        Ok(Self {
            origin,
            resolution,
            nx,
            ny,
            mean_t,
            mean_d,
            variance,
            blocked,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn position(&self, idx: usize) -> Vec2 {
        let (ix, iy) = self.coords(idx);
        self.origin + Vec2::new(ix as f64, iy as f64) * self.resolution
    }

    pub fn is_blocked(&self, idx: usize) -> bool {
        self.blocked[idx]
    }

    pub fn mean_t(&self, idx: usize) -> f64 {
        self.mean_t[idx]
    }

    pub fn mean_d(&self, idx: usize) -> f64 {
        self.mean_d[idx]
    }

    pub fn variance(&self, idx: usize) -> f64 {
        self.variance[idx]
    }

    /// Cost added on entering `idx`: `f_T (1 − T) + f_σ σ²`.
    pub fn node_penalty(&self, idx: usize, f_t: f64, f_sigma: f64) -> f64 {
        f_t * (1.0 - clamp_traversability(self.mean_t[idx])) + f_sigma * self.variance[idx]
    }

    /// Lattice neighbours of `idx` with their Euclidean edge lengths.
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        const OFFSETS: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        let (ix, iy) = self.coords(idx);
        let res = self.resolution;
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let x = ix as i64 + dx;
            let y = iy as i64 + dy;
            if x < 0 || y < 0 || x >= self.nx as i64 || y >= self.ny as i64 {
                return None;
            }
            let len = if dx != 0 && dy != 0 {
                res * std::f64::consts::SQRT_2
            } else {
                res
            };
            Some((self.index(x as usize, y as usize), len))
        })
    }

    /// Nearest unblocked node within `radius` of `p`.
    pub fn snap(&self, p: &Vec2, radius: f64) -> Option<usize> {
        let rel = (p - self.origin) / self.resolution;
        let span = (radius / self.resolution).ceil() as i64 + 1;
        let cx = rel.x.round() as i64;
        let cy = rel.y.round() as i64;
        let mut best: Option<(f64, usize)> = None;
        for y in (cy - span)..=(cy + span) {
            for x in (cx - span)..=(cx + span) {
                if x < 0 || y < 0 || x >= self.nx as i64 || y >= self.ny as i64 {
                    continue;
                }
                let idx = self.index(x as usize, y as usize);
                if self.blocked[idx] {
                    continue;
                }
                let d = (self.position(idx) - p).norm();
                if d <= radius + 1e-12 && best.is_none_or(|(bd, bi)| (d, idx) < (bd, bi)) {
                    best = Some((d, idx));
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Infers the posterior on every lattice node of `bounds`.
pub fn build_grid<F: Field + ?Sized>(
    model: &F,
    bounds: &Bounds,
    resolution: f64,
    safety_radius: f64,
) -> Result<DiscreteGrid> {
    if resolution <= 0.0 {
        return Err(Error::InvalidConfig("grid resolution must be positive".into()));
    }
    let nx = robust_ceil(bounds.width() / resolution) + 1;
    let ny = robust_ceil(bounds.height() / resolution) + 1;
    let nodes: Vec<Vec2> = (0..nx * ny)
        .map(|i| bounds.min + Vec2::new((i % nx) as f64, (i / nx) as f64) * resolution)
        .collect();
    let posts = model.infer_batch(&nodes);
    DiscreteGrid::from_fields(
        bounds.min,
        resolution,
        nx,
        ny,
        posts.iter().map(|p| p.mean_t).collect(),
        posts.iter().map(|p| p.mean_d).collect(),
        posts.iter().map(|p| p.variance).collect(),
        safety_radius,
    )
}

/// A* weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AstarConfig {
    pub f_t: f64,
    pub f_sigma: f64,
    /// `w ≥ 1`; 1 keeps the search optimal.
    pub heuristic_weight: f64,
    /// Start and goal snap to the nearest free node within this many cells.
    pub snap_cells: f64,
}

impl Default for AstarConfig {
    fn default() -> Self {
        Self {
            f_t: 10.0,
            f_sigma: 200.0,
            heuristic_weight: 1.0,
            snap_cells: 3.0,
        }
    }
}

/// Lattice path and its accumulated transition cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub nodes: Vec<usize>,
    pub waypoints: Vec<Vec2>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // max-heap: smallest f first, then smallest g, then smallest index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Transition cost `‖p − n‖ + f_T (1 − T(n)) + f_σ σ²(n)`, heuristic
/// `w ‖n − g‖`.
pub fn astar(grid: &DiscreteGrid, s: &Vec2, g: &Vec2, cfg: &AstarConfig) -> Result<GridPath> {
    let radius = cfg.snap_cells * grid.resolution;
    let start = grid.snap(s, radius).ok_or(Error::StartOrGoalBlocked)?;
    let goal = grid.snap(g, radius).ok_or(Error::StartOrGoalBlocked)?;
    let goal_pos = grid.position(goal);
    let h = |idx: usize| cfg.heuristic_weight * (grid.position(idx) - goal_pos).norm();

    let n = grid.len();
    let mut g_score = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();
    g_score[start] = 0.0;
    open.push(OpenEntry {
        f: h(start),
        g: 0.0,
        idx: start,
    });

    while let Some(OpenEntry { g: gc, idx, .. }) = open.pop() {
        if gc > g_score[idx] {
            continue;
        }
        if idx == goal {
            let mut nodes = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                nodes.push(cur);
            }
            nodes.reverse();
            let waypoints = nodes.iter().map(|&i| grid.position(i)).collect();
            return Ok(GridPath {
                nodes,
                waypoints,
                cost: gc,
            });
        }
        for (nb, len) in grid.neighbours(idx) {
            if grid.blocked[nb] {
                continue;
            }
            let cand = gc + (len + grid.node_penalty(nb, cfg.f_t, cfg.f_sigma));
            if cand < g_score[nb] {
                g_score[nb] = cand;
                parent[nb] = idx;
                open.push(OpenEntry {
                    f: cand + h(nb),
                    g: cand,
                    idx: nb,
                });
            }
        }
    }
    Err(Error::NoPath)
}
