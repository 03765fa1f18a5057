//! Transition-based RRT in continuous space.
//!
//! Extensions are collision-checked against the regressed obstacle distance
//! and then filtered by a stochastic transition test on the node cost
//! `‖n − g‖ + f_T (1 − T̄(n)) + f_σ σ²(n)`, with the usual adaptive
//! temperature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::{clamp_traversability, Bounds, Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrrtConfig {
    /// Maximum edge length, metres.
    pub step: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
    pub temperature_init: f64,
    /// Temperature multiplier `α > 1`.
    pub temp_rate: f64,
    pub n_fail_max: usize,
    pub f_t: f64,
    pub f_sigma: f64,
    pub safety_radius: f64,
    pub collision_check_res: f64,
}

impl Default for TrrtConfig {
    fn default() -> Self {
        let f_sigma = 200.0;
        Self {
            step: 0.5,
            goal_bias: 0.1,
            max_iterations: 20_000,
            temperature_init: 1e-2 * f_sigma,
            temp_rate: 2.0,
            n_fail_max: 20,
            f_t: 10.0,
            f_sigma,
            safety_radius: 0.1,
            collision_check_res: 0.05,
        }
    }
}

impl TrrtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("trrt: {m}")));
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return bad("goal_bias must lie in [0, 1)");
        }
        if !(self.temp_rate > 1.0) {
            return bad("temp_rate must exceed 1");
        }
        if !(self.temperature_init > 0.0) {
            return bad("temperature_init must be positive");
        }
        if !(self.collision_check_res > 0.0) {
            return bad("collision_check_res must be positive");
        }
        Ok(())
    }
}

/// `‖n − g‖ + f_T (1 − T̄(n)) + f_σ σ²(n)` with `T̄` clamped to `[1e-3, 1]`.
pub fn node_cost<F: Field + ?Sized>(model: &F, n: &Vec2, g: &Vec2, f_t: f64, f_sigma: f64) -> f64 {
    let post = model.infer(n);
    (n - g).norm() + f_t * (1.0 - clamp_traversability(post.mean_t)) + f_sigma * post.variance
}

/// Adaptive temperature of the transition test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature {
    pub value: f64,
    pub rate: f64,
    pub n_fail: usize,
    pub n_fail_max: usize,
}

impl Temperature {
    pub fn new(value: f64, rate: f64, n_fail_max: usize) -> Self {
        Self {
            value,
            rate,
            n_fail: 0,
            n_fail_max,
        }
    }

    /// Downhill moves always pass. Uphill moves pass with probability
    /// `exp(−Δc / T)`; a pass cools the temperature by `α`, and more than
    /// `n_fail_max` consecutive rejections heat it by `α`.
    pub fn transition_test<R: Rng + ?Sized>(
        &mut self,
        c_parent: f64,
        c_child: f64,
        rng: &mut R,
    ) -> bool {
        if c_child <= c_parent {
            return true;
        }
        let p = (-(c_child - c_parent) / self.value).exp();
        if rng.random::<f64>() < p {
            self.value /= self.rate;
            self.n_fail = 0;
            true
        } else {
            self.n_fail += 1;
            if self.n_fail > self.n_fail_max {
                self.value *= self.rate;
                self.n_fail = 0;
            }
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub position: Vec2,
    pub parent: Option<usize>,
    pub cost: f64,
}

/// Search tree rooted at the start.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn nearest(&self, p: &Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.position - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Root-to-node chain of positions.
    pub fn path_to(&self, mut idx: usize) -> Vec<Vec2> {
        let mut out = vec![self.nodes[idx].position];
        while let Some(p) = self.nodes[idx].parent {
            out.push(self.nodes[p].position);
            idx = p;
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrrtPlan {
    pub waypoints: Vec<Vec2>,
    pub tree: Tree,
    pub iterations: usize,
}

/// True when every point of `[a, b]`, sampled at `res`, has `d̄ > R`.
pub fn edge_is_free<F: Field + ?Sized>(model: &F, a: &Vec2, b: &Vec2, res: f64, radius: f64) -> bool {
    let len = (b - a).norm();
    let steps = ((len / res).ceil() as usize).max(1);
    (0..=steps).all(|k| {
        let p = a + (b - a) * (k as f64 / steps as f64);
        model.mean_distance(&p) > radius
    })
}

/// Grows a tree from `s` until it connects to `g`. Deterministic in
/// `rng_seed`.
pub fn plan<F: Field + ?Sized>(
    model: &F,
    s: &Vec2,
    g: &Vec2,
    bounds: &Bounds,
    cfg: &TrrtConfig,
    rng_seed: u64,
) -> Result<TrrtPlan> {
    cfg.validate()?;
    let r = cfg.safety_radius;
    if model.mean_distance(s) <= r || model.mean_distance(g) <= r {
        return Err(Error::StartOrGoalBlocked);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut temp = Temperature::new(cfg.temperature_init, cfg.temp_rate, cfg.n_fail_max);
    let cost = |p: &Vec2| node_cost(model, p, g, cfg.f_t, cfg.f_sigma);
    let mut tree = Tree {
        nodes: vec![TreeNode {
            position: *s,
            parent: None,
            cost: cost(s),
        }],
    };

    let finish = |tree: Tree, leaf: usize, iterations: usize| TrrtPlan {
        waypoints: tree.path_to(leaf),
        tree,
        iterations,
    };

    if (g - s).norm() <= cfg.step && edge_is_free(model, s, g, cfg.collision_check_res, r) {
        tree.nodes.push(TreeNode {
            position: *g,
            parent: Some(0),
            cost: cost(g),
        });
        return Ok(finish(tree, 1, 0));
    }

    for it in 1..=cfg.max_iterations {
        let target = if rng.random::<f64>() < cfg.goal_bias {
            *g
        } else {
            Vec2::new(
                rng.random_range(bounds.min.x..=bounds.max.x),
                rng.random_range(bounds.min.y..=bounds.max.y),
            )
        };
        if model.mean_distance(&target) <= r {
            continue;
        }
        let near = tree.nearest(&target);
        let near_pos = tree.nodes[near].position;
        let dir = target - near_pos;
        let dist = dir.norm();
        if dist < 1e-9 {
            continue;
        }
        let new = if dist <= cfg.step {
            target
        } else {
            near_pos + dir * (cfg.step / dist)
        };
        if !edge_is_free(model, &near_pos, &new, cfg.collision_check_res, r) {
            continue;
        }
        let c_new = cost(&new);
        if !temp.transition_test(tree.nodes[near].cost, c_new, &mut rng) {
            continue;
        }
        tree.nodes.push(TreeNode {
            position: new,
            parent: Some(near),
            cost: c_new,
        });
        let idx = tree.nodes.len() - 1;
        if new == *g {
            return Ok(finish(tree, idx, it));
        }
        if (g - new).norm() <= cfg.step && edge_is_free(model, &new, g, cfg.collision_check_res, r)
        {
            tree.nodes.push(TreeNode {
                position: *g,
                parent: Some(idx),
                cost: cost(g),
            });
            let leaf = tree.nodes.len() - 1;
            return Ok(finish(tree, leaf, it));
        }
    }
    Err(Error::MaxIterationsExceeded(cfg.max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Posterior;

    struct Open;
    impl Field for Open {
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
    fn cost_vanishes_at_goal_on_ideal_terrain() {
        let g = Vec2::new(3.0, 4.0);
        assert_eq!(node_cost(&Open, &g, &g, 10.0, 200.0), 0.0);
        assert_eq!(node_cost(&Open, &Vec2::zeros(), &g, 0.0, 0.0), 5.0);
    }

    #[test]
    fn downhill_always_accepted() {
        let mut t = Temperature::new(1e-9, 2.0, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(t.transition_test(2.0, 1.0, &mut rng));
            assert!(t.transition_test(2.0, 2.0, &mut rng));
        }
        assert_eq!(t.value, 1e-9);
    }

    #[test]
    fn hot_temperature_accepts_uphill() {
        let mut t = Temperature::new(1e12, 2.0, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let accepted = (0..1000)
            .filter(|_| {
                t.value = 1e12;
                t.transition_test(0.0, 1.0, &mut rng)
            })
            .count();
        assert_eq!(accepted, 1000);
    }

    #[test]
    fn temperature_adapts() {
        let mut t = Temperature::new(1e-6, 2.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            assert!(!t.transition_test(0.0, 1.0, &mut rng));
        }
        assert_eq!(t.value, 1e-6);
        assert!(!t.transition_test(0.0, 1.0, &mut rng));
        assert_eq!(t.value, 2e-6);
        assert_eq!(t.n_fail, 0);
    }

    #[test]
    fn plans_in_open_space() {
        let b = Bounds::square(10.0);
        let s = Vec2::new(1.0, 1.0);
        let g = Vec2::new(8.0, 7.0);
        let cfg = TrrtConfig::default();
        let plan_a = plan(&Open, &s, &g, &b, &cfg, 3).unwrap();
        assert_eq!(plan_a.waypoints[0], s);
        assert_eq!(*plan_a.waypoints.last().unwrap(), g);
        assert!(plan_a
            .waypoints
            .windows(2)
            .all(|w| (w[1] - w[0]).norm() <= cfg.step + 1e-12));
        assert_eq!(plan_a, plan(&Open, &s, &g, &b, &cfg, 3).unwrap());
    }

    #[test]
    fn config_validation() {
        let b = Bounds::square(10.0);
        let bad = TrrtConfig {
            temp_rate: 1.0,
            ..Default::default()
        };
        assert!(plan(&Open, &Vec2::zeros(), &Vec2::new(1.0, 1.0), &b, &bad, 0).is_err());
    }
}
