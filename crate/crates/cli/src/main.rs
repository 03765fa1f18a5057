use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use gprnav_core::bco::LossBreakdown;
use gprnav_core::envgen::{self, EnvironmentMap};
use gprnav_core::gp::FitConfig;
use gprnav_core::harness::{self, Method, PathMetrics, SuiteConfig};
use gprnav_core::render::{self, PathOverlay};
use gprnav_core::{Bounds, GprModel, Vec2};

#[derive(Parser)]
#[command(name = "gprnav", version, about = "Path planning on Gaussian-process terrain maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural maps as JSON files.
    GenMaps {
        #[arg(long, default_value_t = 10)]
        maps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a map, ablate the samples and fit a regression model.
    Train {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        ablate_discs: usize,
        #[arg(long, default_value_t = 1.5)]
        ablate_radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a single query on a trained model.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long, value_parser = parse_point)]
        start: Vec2,
        #[arg(long, value_parser = parse_point)]
        goal: Vec2,
        /// Suite configuration; only the `planner` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Side length of the square map, metres.
        #[arg(long, default_value_t = envgen::MAP_SIDE)]
        side: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the benchmark suite.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gprnav_core::Error| e.to_string())
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| format!("{v:?}: {e}"))
    };
    Ok(Vec2::new(parse(x)?, parse(y)?))
}

fn load_suite_config(path: Option<&Path>) -> Result<SuiteConfig> {
    match path {
        Some(p) => SuiteConfig::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(SuiteConfig::default()),
    }
}

#[derive(Serialize)]
struct PlanFile<'a> {
    method: Method,
    start: [f64; 2],
    goal: [f64; 2],
    compute_time_s: f64,
    /// Polyline waypoints, or control points for BCO methods.
    waypoints: Vec<[f64; 2]>,
    /// Points along the curve at the evaluation resolution (BCO only).
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<[f64; 2]>>,
    metrics: PathMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [LossBreakdown]>,
}

fn xy(p: &Vec2) -> [f64; 2] {
    [p.x, p.y]
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenMaps { maps, seed, out } => {
            fs::create_dir_all(&out)?;
            let cfg = SuiteConfig {
                n_maps: maps,
                master_seed: seed,
                ..Default::default()
            };
            for (i, s) in harness::map_seeds(&cfg).into_iter().enumerate() {
                let path = out.join(format!("map_{i:03}.json"));
                envgen::generate_map(s).save(&path)?;
                println!("{}", path.display());
            }
        }
        Command::Train {
            map,
            points,
            ablate_discs,
            ablate_radius,
            out,
        } => {
            let map = EnvironmentMap::load(&map)
                .with_context(|| format!("reading {}", map.display()))?;
            let training =
                envgen::sample_training_set(&map, points, harness::derive_seed(map.seed, 1))?;
            let training = envgen::ablate(
                &training,
                harness::derive_seed(map.seed, 2),
                ablate_discs,
                ablate_radius,
            );
            let kept = training.len();
            let model = harness::fit_and_train(training, &FitConfig::default())?;
            model.save(&out)?;
            println!(
                "{} training points; params_T {:?}; params_d {:?}",
                kept,
                model.params_t(),
                model.params_d()
            );
        }
        Command::Plan {
            model,
            method,
            start,
            goal,
            config,
            out,
            svg,
            side,
            seed,
        } => {
            let cfg = load_suite_config(config.as_deref())?;
            let model = GprModel::load(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let bounds = Bounds::square(side);
            if !bounds.contains(&start) || !bounds.contains(&goal) {
                bail!("start and goal must lie inside [0, {side}]²");
            }
            let outcome =
                harness::plan_single(&model, &bounds, method, &start, &goal, &cfg.planner, seed)?;
            let curve_pts = outcome.trace_points(cfg.planner.bco.res);
            let file = PlanFile {
                method,
                start: xy(&start),
                goal: xy(&goal),
                compute_time_s: outcome.time_s,
                waypoints: outcome.waypoints.iter().map(xy).collect(),
                curve: outcome
                    .curve
                    .as_ref()
                    .map(|_| curve_pts.iter().map(xy).collect()),
                metrics: outcome.metrics,
                trace: outcome.curve.as_ref().map(|c| c.losses.as_slice()),
            };
            fs::write(&out, serde_json::to_string_pretty(&file)?)?;
            if let Some(svg) = svg {
                let overlay = PathOverlay::for_method(method, curve_pts);
                fs::write(
                    svg,
                    render::render(&model, &bounds, cfg.planner.safety_radius, &[overlay]),
                )?;
            }
            let m = &outcome.metrics;
            println!(
                "{method}: length {:.3} m, traversability {:.3}, variance {:.4}, curvature_violated {}, collided {}",
                m.length_m, m.mean_traversability, m.mean_variance, m.curvature_violated, m.collided
            );
        }
        Command::Bench { config, out, jobs } => {
            let mut cfg = load_suite_config(config.as_deref())?;
            cfg.output_dir = Some(out.clone());
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            let result = harness::run_suite(&cfg)?;
            println!(
                "{:<10} {:>5} {:>5} {:>9} {:>8} {:>7} {:>8} {:>6} {:>6}",
                "method", "recs", "ok", "time_s", "length", "trav", "var", "curv", "coll"
            );
            for s in &result.summary.methods {
                println!(
                    "{:<10} {:>5} {:>5} {:>9.4} {:>8.3} {:>7.3} {:>8.4} {:>6} {:>6}",
                    s.method.map(|m| m.as_str()).unwrap_or("-"),
                    s.records,
                    s.ok,
                    s.mean_compute_time_s,
                    s.mean_length_m,
                    s.mean_traversability,
                    s.mean_variance,
                    s.curvature_violations,
                    s.collisions
                );
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
