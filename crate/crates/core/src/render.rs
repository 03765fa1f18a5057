//! SVG visualisation of a regressed map with planned paths.

use std::fmt::Write as _;

use crate::field::Field;
use crate::harness::Method;
use crate::{clamp_traversability, robust_ceil, Bounds, Vec2};

/// Raster cell size of the map underlay, metres.
pub const RASTER_RESOLUTION: f64 = 0.05;
const PIXELS_PER_METRE: f64 = 50.0;

/// Posterior traversability and blocked mask on a regular raster. Pixel
/// `(ix, iy)` covers the cell whose centre is
/// `origin + ((ix + ½) res, (iy + ½) res)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub origin: Vec2,
    pub res: f64,
    pub nx: usize,
    pub ny: usize,
    pub traversability: Vec<f64>,
    pub blocked: Vec<bool>,
}

impl Raster {
    pub fn centre(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin + Vec2::new(ix as f64 + 0.5, iy as f64 + 0.5) * self.res
    }

    pub fn centres(&self) -> Vec<Vec2> {
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| self.centre(ix, iy))
            .collect()
    }
}

pub fn rasterize<F: Field + ?Sized>(
    model: &F,
    bounds: &Bounds,
    res: f64,
    safety_radius: f64,
) -> Raster {
    let mut raster = Raster {
        origin: bounds.min,
        res,
        nx: robust_ceil(bounds.width() / res).max(1),
        ny: robust_ceil(bounds.height() / res).max(1),
        traversability: Vec::new(),
        blocked: Vec::new(),
    };
    let posts = model.infer_batch(&raster.centres());
    raster.traversability = posts.iter().map(|p| clamp_traversability(p.mean_t)).collect();
    raster.blocked = posts.iter().map(|p| p.mean_d <= safety_radius).collect();
    raster
}

/// A path drawn on top of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOverlay {
    pub label: String,
    pub colour: String,
    pub points: Vec<Vec2>,
}

impl PathOverlay {
    pub fn for_method(method: Method, points: Vec<Vec2>) -> Self {
        Self {
            label: method.as_str().to_string(),
            colour: method_colour(method).to_string(),
            points,
        }
    }
}

pub fn method_colour(method: Method) -> &'static str {
    match method {
        Method::Astar => "#d62728",
        Method::Trrt => "#ff7f0e",
        Method::BcoNone => "#9467bd",
        Method::BcoAstar => "#1f77b4",
        Method::BcoTrrt => "#2ca02c",
    }
}

/// Renders the map underlay (grey = traversability, black = `d̄ ≤ R`) and the
/// overlays at the default raster resolution.
pub fn render<F: Field + ?Sized>(
    model: &F,
    bounds: &Bounds,
    safety_radius: f64,
    paths: &[PathOverlay],
) -> String {
    let raster = rasterize(model, bounds, RASTER_RESOLUTION, safety_radius);
    render_raster(&raster, paths)
}

pub fn render_raster(raster: &Raster, paths: &[PathOverlay]) -> String {
    let scale = PIXELS_PER_METRE;
    let width = raster.nx as f64 * raster.res * scale;
    let height = raster.ny as f64 * raster.res * scale;
    let legend_h = 18.0 * paths.len() as f64 + if paths.is_empty() { 0.0 } else { 8.0 };
    let px = raster.res * scale;
    let to_svg = |p: &Vec2| {
        (
            (p.x - raster.origin.x) * scale,
            height - (p.y - raster.origin.y) * scale,
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = width,
        h = height + legend_h
    );
    let _ = writeln!(svg, r#"<g id="map" shape-rendering="crispEdges">"#);
    for iy in 0..raster.ny {
        // runs of identical colour along the row
        let y = height - (iy + 1) as f64 * px;
        let mut ix = 0;
        while ix < raster.nx {
            let colour = pixel_colour(raster, ix, iy);
            let start = ix;
            while ix < raster.nx && pixel_colour(raster, ix, iy) == colour {
                ix += 1;
            }
            let _ = writeln!(
                svg,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                start as f64 * px,
                y,
                (ix - start) as f64 * px,
                px,
                colour
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g id="paths" fill="none" stroke-width="2">"#);
    for path in paths {
        if path.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = path
            .points
            .iter()
            .map(|p| {
                let (x, y) = to_svg(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline stroke="{}" points="{}"><title>{}</title></polyline>"#,
            path.colour,
            pts.join(" "),
            escape(&path.label)
        );
    }
    let _ = writeln!(svg, "</g>");

    if !paths.is_empty() {
        let _ = writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
        for (i, path) in paths.iter().enumerate() {
            let y = height + 14.0 + 18.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="6" y1="{y:.1}" x2="26" y2="{y:.1}" stroke="{}" stroke-width="3"/><text x="32" y="{:.1}">{}</text>"#,
                path.colour,
                y + 4.0,
                escape(&path.label)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn pixel_colour(raster: &Raster, ix: usize, iy: usize) -> String {
    let i = iy * raster.nx + ix;
    if raster.blocked[i] {
        "#000000".to_string()
    } else {
        let v = (raster.traversability[i] * 255.0).round() as u8;
        format!("#{v:02x}{v:02x}{v:02x}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
