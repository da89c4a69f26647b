//! Cluster-coloured scatter plot of a 2-D projection.

use std::fmt::Write as _;
use std::path::Path;

use super::Projection2D;
use crate::clustering::ClusterModel;
use crate::error::{Error, Result};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 720.0;
const MARGIN: f64 = 40.0;
const TITLE_BAND: f64 = 40.0;
const LEGEND_WIDTH: f64 = 140.0;
const RADIUS: f64 = 2.5;

const BASE_PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Distinct colour for cluster `c` of `k`. Beyond the base palette hues are
/// spread evenly around the colour wheel.
pub fn palette_color(c: usize, k: usize) -> String {
    if k <= BASE_PALETTE.len() {
        return BASE_PALETTE[c].to_string();
    }
    let hue = 360.0 * c as f64 / k as f64;
    let lightness = if c % 2 == 0 { 45 } else { 60 };
    format!("hsl({hue:.1},70%,{lightness}%)")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn scatter_svg(proj: &Projection2D, model: &ClusterModel, snapshot_id: &str) -> Result<String> {
    if proj.record_ids != model.record_ids {
        return Err(Error::IdMismatch(
            "projection and cluster model cover different record ids".into(),
        ));
    }
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &proj.points {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    if proj.points.is_empty() {
        (min_x, max_x, min_y, max_y) = (0.0, 0.0, 0.0, 0.0);
    }
    // pad degenerate bounds so a single location still maps to the centre
    if max_x - min_x < 1e-9 {
        min_x -= 1.0;
        max_x += 1.0;
    }
    if max_y - min_y < 1e-9 {
        min_y -= 1.0;
        max_y += 1.0;
    }
    let plot_w = WIDTH - LEGEND_WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - TITLE_BAND - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - min_x) / (max_x - min_x) * plot_w;
    let sy = |y: f64| TITLE_BAND + MARGIN + (max_y - y) / (max_y - min_y) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">t-SNE projection of {} (K={}, perplexity={}, seed={})</text>"#,
        WIDTH / 2.0,
        escape(snapshot_id),
        model.k,
        proj.perplexity,
        proj.seed
    );
    let _ = writeln!(svg, r#"<g id="points">"#);
    for (p, &c) in proj.points.iter().zip(&model.assignments) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{RADIUS}" fill="{}" fill-opacity="0.75"/>"#,
            sx(p[0]),
            sy(p[1]),
            palette_color(c, model.k)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="13">"#);
    let lx = WIDTH - LEGEND_WIDTH;
    for c in 0..model.k {
        let y = TITLE_BAND + MARGIN + 22.0 * c as f64;
        let _ = writeln!(
            svg,
            r#"<rect class="legend" x="{lx:.1}" y="{y:.1}" width="14" height="14" fill="{}"/><text x="{:.1}" y="{:.1}">Cluster {c}</text>"#,
            palette_color(c, model.k),
            lx + 20.0,
            y + 12.0
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_scatter_svg(
    proj: &Projection2D,
    model: &ClusterModel,
    snapshot_id: &str,
    path: &Path,
) -> Result<()> {
    let svg = scatter_svg(proj, model, snapshot_id)?;
    crate::io::write_bytes(path, svg.as_bytes())
}
