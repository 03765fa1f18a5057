mod common;

use common::*;
use gprnav_core::bezier::{self, ControlPolygon};
use gprnav_core::field::Field;
use gprnav_core::grid::{self, AstarConfig, DiscreteGrid};
use gprnav_core::{Bounds, Posterior, Vec2};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn evaluate_matches_de_casteljau() {
    let mut r = rng(1);
    for _ in 0..200 {
        let m = r.random_range(2..=10);
        let pts = random_polygon(&mut r, m, -5.0, 5.0);
        let p = ControlPolygon::new(pts.clone()).unwrap();
        for _ in 0..10 {
            let t: f64 = r.random();
            assert!((p.evaluate(t).unwrap() - de_casteljau(&pts, t)).norm() < 1e-12);
        }
        assert_eq!(p.evaluate(0.0).unwrap(), pts[0]);
        assert_eq!(p.evaluate(1.0).unwrap(), pts[m - 1]);
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut r = rng(2);
    let pts = random_polygon(&mut r, 6, 0.0, 4.0);
    let p = ControlPolygon::new(pts).unwrap();
    let h = 1e-5;
    for k in 1..=20 {
        let t = k as f64 / 21.0;
        let (d1, d2) = p.derivatives(t).unwrap();
        let fd1 = (p.point_at(t + h) - p.point_at(t - h)) / (2.0 * h);
        let fd2 = (p.derivatives_at(t + h).0 - p.derivatives_at(t - h).0) / (2.0 * h);
        assert!((d1 - fd1).norm() <= 1e-6 * d1.norm().max(1.0));
        assert!((d2 - fd2).norm() <= 1e-6 * d2.norm().max(1.0));
    }
}

#[test]
fn curvature_matches_circumradius() {
    let p = ControlPolygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)])
        .unwrap();
    let h = 1e-4;
    for t in [0.2, 0.35, 0.5, 0.8] {
        let (a, b, c) = (p.point_at(t - h), p.point_at(t), p.point_at(t + h));
        let (ab, bc, ca) = ((b - a).norm(), (c - b).norm(), (a - c).norm());
        let cross = ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs();
        let oracle = 2.0 * cross / (ab * bc * ca);
        let kappa = p.curvature(t).unwrap().value;
        assert!((kappa - oracle).abs() <= 0.01 * oracle, "t={t}: {kappa} vs {oracle}");
    }
    let doubled = ControlPolygon::new(p.points().iter().map(|q| q * 2.0).collect()).unwrap();
    for t in [0.1, 0.5, 0.9] {
        let (a, b) = (p.curvature(t).unwrap().value, doubled.curvature(t).unwrap().value);
        assert!((a - 2.0 * b).abs() < 1e-12 * a);
    }
}

#[test]
fn sample_path_counts_and_endpoints() {
    let line = ControlPolygon::new(vec![Vec2::zeros(), Vec2::new(1.0, 0.0)]).unwrap();
    assert_eq!(bezier::sample_path(&line, 0.1).len(), 10);
    assert_eq!(bezier::sample_path(&line, 5.0).len(), 8);
    let mut r = rng(3);
    let p = ControlPolygon::new(random_polygon(&mut r, 7, 0.0, 5.0)).unwrap();
    let s = bezier::sample_path(&p, 0.1);
    assert_eq!(s.first().unwrap().position, p.first());
    assert_eq!(s.last().unwrap().position, p.last());
    assert!(s.windows(2).all(|w| w[0].t < w[1].t));
    assert!(s.iter().all(|c| c.curvature >= 0.0));
}

proptest! {
    #[test]
    fn samples_stay_in_convex_hull(seed in 0u64..100_000, m in 2usize..9) {
        let mut r = rng(seed);
        let pts = random_polygon(&mut r, m, -3.0, 3.0);
        let p = ControlPolygon::new(pts.clone()).unwrap();
        for s in bezier::sample_uniform(&p, 25) {
            // a point is outside the hull iff some direction separates it
            for k in 0..64 {
                let a = k as f64 * std::f64::consts::TAU / 64.0;
                let dir = Vec2::new(a.cos(), a.sin());
                let hull_max = pts.iter().map(|q| q.dot(&dir)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(s.position.dot(&dir) <= hull_max + 1e-9);
            }
        }
    }
}

// ----------------------------------------------------------------------------
// A*
// ----------------------------------------------------------------------------

fn random_grid(seed: u64, n: usize) -> DiscreteGrid {
    let mut r = rng(seed);
    let len = n * n;
    let mean_t: Vec<f64> = (0..len).map(|_| r.random_range(-0.2..1.2)).collect();
    let variance: Vec<f64> = (0..len).map(|_| r.random_range(0.0..0.05)).collect();
    let mean_d: Vec<f64> = (0..len)
        .map(|_| if r.random::<f64>() < 0.2 { 0.0 } else { 1.0 })
        .collect();
    DiscreteGrid::from_fields(Vec2::zeros(), 0.5, n, n, mean_t, mean_d, variance, 0.1).unwrap()
}

#[test]
fn astar_equals_dijkstra() {
    let cfg = AstarConfig {
        heuristic_weight: 1.0,
        snap_cells: 0.0,
        ..AstarConfig::default()
    };
    let mut solved = 0;
    let mut case = 0;
    while solved < 50 {
        case += 1;
        let g = random_grid(case, 20);
        let mut r = rng(10_000 + case);
        let free: Vec<usize> = (0..g.len()).filter(|&i| !g.is_blocked(i)).collect();
        let s = free[r.random_range(0..free.len())];
        let t = free[r.random_range(0..free.len())];
        let oracle = dijkstra(&g, s, t, cfg.f_t, cfg.f_sigma);
        let ours = grid::astar(&g, &g.position(s), &g.position(t), &cfg);
        match (oracle, ours) {
            (Some(c), Ok(path)) => {
                assert_eq!(path.cost, c, "case {case}");
                assert_eq!(*path.nodes.first().unwrap(), s);
                assert_eq!(*path.nodes.last().unwrap(), t);
                assert!(path.nodes.iter().all(|&i| !g.is_blocked(i)));
                solved += 1;
            }
            (None, Err(_)) => {}
            (o, a) => panic!("case {case}: oracle {o:?} vs astar {:?}", a.map(|p| p.cost)),
        }
    }
}

#[test]
fn raising_traversability_weight_never_hurts_traversability() {
    for case in 0..20 {
        let g = random_grid(500 + case, 20);
        let free: Vec<usize> = (0..g.len()).filter(|&i| !g.is_blocked(i)).collect();
        let (s, t) = (g.position(free[0]), g.position(*free.last().unwrap()));
        let mut prev = f64::INFINITY;
        for f_t in [0.0, 10.0, 100.0] {
            let cfg = AstarConfig {
                f_t,
                heuristic_weight: 1.0,
                ..AstarConfig::default()
            };
            let Ok(path) = grid::astar(&g, &s, &t, &cfg) else { break };
            let sum: f64 = path.nodes[1..]
                .iter()
                .map(|&i| 1.0 - g.mean_t(i).clamp(1e-3, 1.0))
                .sum();
            assert!(sum <= prev + 1e-9, "case {case}, f_t {f_t}");
            prev = sum;
        }
    }
}

struct Uniform;
impl Field for Uniform {
    fn infer(&self, _q: &Vec2) -> Posterior {
        Posterior {
            mean_t: 1.0,
            mean_d: 3.0,
            variance: 0.0,
            grad_mean_t: Vec2::zeros(),
            grad_mean_d: Vec2::zeros(),
            grad_variance: Vec2::zeros(),
        }
    }
}

#[test]
fn grid_attributes_come_from_the_model() {
    let model = random_model(4, 40);
    let b = Bounds::square(10.0);
    let g = grid::build_grid(&model, &b, 0.1, 0.1).unwrap();
    assert_eq!(g.dims(), (101, 101));
    for idx in (0..g.len()).step_by(97) {
        let post = model.infer(&g.position(idx));
        assert!((g.mean_t(idx) - post.mean_t).abs() < 1e-12);
        assert!((g.variance(idx) - post.variance).abs() < 1e-12);
        assert_eq!(g.is_blocked(idx), post.mean_d <= 0.1);
    }

    let open = grid::build_grid(&Uniform, &b, 0.1, 0.1).unwrap();
    let cfg = AstarConfig {
        heuristic_weight: 1.0,
        ..AstarConfig::default()
    };
    let path = grid::astar(&open, &Vec2::new(1.0, 2.0), &Vec2::new(6.0, 2.0), &cfg).unwrap();
    assert!((path.cost - 5.0).abs() <= 0.1);
}
