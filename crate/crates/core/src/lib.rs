//! Path planning over Gaussian-process terrain maps.
//!
//! The environment is represented by two Gaussian-process regressions sharing
//! the same 2D training inputs: terrain traversability and distance to the
//! closest obstacle. On top of that representation the crate provides
//!
//! * an informative weighted A* on a fixed-resolution lattice ([`grid`]),
//! * a transition-based RRT working in continuous space ([`trrt`]),
//! * gradient-descent optimisation of Bézier control points ([`bco`]),
//!   seeded either by a straight line or by one of the two planners above,
//! * a procedural map generator and a benchmark harness comparing the five
//!   resulting methods ([`envgen`], [`harness`], [`render`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bco;
pub mod bezier;
pub mod envgen;
mod error;
pub mod field;
pub mod gp;
pub mod grid;
pub mod harness;
pub mod optim;
pub mod render;
pub mod trrt;

pub use error::{Error, Result};
pub use field::Field;
pub use gp::{GprModel, KernelParams, Posterior, TrainingSet};

/// 2D point or vector in metres.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Axis-aligned rectangular region of the plane.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    /// Square `[0, side]²`.
    pub fn square(side: f64) -> Self {
        Self::new(Vec2::zeros(), Vec2::new(side, side))
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: &Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Traversability values are clamped into this range before any cost is
/// computed so that `1 - T` stays in `[0, 1)`.
pub const TRAVERSABILITY_FLOOR: f64 = 1e-3;

pub(crate) fn clamp_traversability(t: f64) -> f64 {
    t.clamp(TRAVERSABILITY_FLOOR, 1.0)
}

/// `ceil(x)` that ignores floating-point noise just above an integer.
pub(crate) fn robust_ceil(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}
