use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{WordCloudPanel, LINE_HEIGHT, PHRASE_PALETTE};
use crate::error::{Error, Result};

/// Height of the title strip above each panel.
pub const TITLE_BAND: f64 = 32.0;
pub const PANEL_GAP: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFeatureSet {
    pub panels: Vec<WordCloudPanel>,
    /// (rows, cols)
    pub grid: (usize, usize),
    pub svg_path: PathBuf,
    pub png_path: Option<PathBuf>,
}

pub fn grid_shape(k: usize) -> (usize, usize) {
    let cols = (k as f64).sqrt().ceil().max(1.0) as usize;
    (k.div_ceil(cols).max(1), cols)
}

pub(crate) struct Geometry {
    pub cols: usize,
    pub cell_w: f64,
    pub cell_h: f64,
    pub width: f64,
    pub height: f64,
}

impl Geometry {
    pub fn of(panels: &[WordCloudPanel]) -> Self {
        let (rows, cols) = grid_shape(panels.len());
        let cell_w = panels.iter().map(|p| p.canvas.width).fold(0.0, f64::max);
        let cell_h = panels.iter().map(|p| p.canvas.height).fold(0.0, f64::max) + TITLE_BAND;
        Self {
            cols,
            cell_w,
            cell_h,
            width: cols as f64 * cell_w + (cols + 1) as f64 * PANEL_GAP,
            height: rows as f64 * cell_h + (rows + 1) as f64 * PANEL_GAP,
        }
    }

    /// Top-left corner of the title strip of cell `i`.
    pub fn origin(&self, i: usize) -> (f64, f64) {
        let (r, c) = (i / self.cols, i % self.cols);
        (
            PANEL_GAP + c as f64 * (self.cell_w + PANEL_GAP),
            PANEL_GAP + r as f64 * (self.cell_h + PANEL_GAP),
        )
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn check_order(panels: &[WordCloudPanel], k: usize) -> Result<()> {
    if panels.len() != k {
        return Err(Error::InvalidInput(format!("{} panels for k = {k}", panels.len())));
    }
    if let Some((i, p)) = panels.iter().enumerate().find(|(i, p)| p.cluster_index != *i) {
        return Err(Error::InvalidInput(format!(
            "panel {i} holds cluster {} (panels must be in cluster order)",
            p.cluster_index
        )));
    }
    Ok(())
}

/// One SVG holding every panel in a `rows x cols` grid.
pub fn compose_grid(panels: &[WordCloudPanel], k: usize) -> Result<String> {
    check_order(panels, k)?;
    let g = Geometry::of(panels);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        g.width, g.height, g.width, g.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        let (ox, oy) = g.origin(i);
        let _ = writeln!(svg, r#"<g class="panel" id="cluster-{i}" transform="translate({ox:.2},{oy:.2})">"#);
        let _ = writeln!(
            svg,
            r#"<text class="title" x="{:.2}" y="22" font-family="sans-serif" font-size="20" font-weight="bold" text-anchor="middle">Cluster {}</text>"#,
            panel.canvas.width / 2.0,
            panel.cluster_index
        );
        let _ = writeln!(
            svg,
            r##"<rect x="0" y="{TITLE_BAND}" width="{:.2}" height="{:.2}" fill="#fafafa" stroke="#9e9e9e"/>"##,
            panel.canvas.width, panel.canvas.height
        );
        for p in &panel.placements {
            // baseline sits at roughly 80% of the box height
            let baseline = TITLE_BAND + p.bbox.y + p.font_size * LINE_HEIGHT * 0.8;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="{:.2}" textLength="{:.2}" lengthAdjust="spacingAndGlyphs" fill="{}">{}</text>"#,
                p.bbox.x,
                baseline,
                p.font_size,
                p.bbox.w,
                PHRASE_PALETTE[p.color_index % PHRASE_PALETTE.len()],
                escape(&p.phrase)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `wordclouds.svg`, the optional `wordclouds.png` and
/// `panels.json` into `dir`.
pub fn write_visual_features(
    dir: &Path,
    panels: Vec<WordCloudPanel>,
    k: usize,
    png_width: Option<u32>,
) -> Result<VisualFeatureSet> {
    let svg = compose_grid(&panels, k)?;
    let svg_path = dir.join("wordclouds.svg");
    crate::io::write_bytes(&svg_path, svg.as_bytes())?;
    let png_path = match png_width {
        Some(width) => {
            let path = dir.join("wordclouds.png");
            crate::io::write_bytes(&path, &super::rasterize(&panels, width)?)?;
            Some(path)
        }
        None => None,
    };
    let set = VisualFeatureSet { panels, grid: grid_shape(k), svg_path, png_path };
    let portable = VisualFeatureSet {
        svg_path: "wordclouds.svg".into(),
        png_path: set.png_path.as_ref().map(|_| "wordclouds.png".into()),
        ..set.clone()
    };
    crate::io::write_json(&dir.join("panels.json"), &portable)?;
    Ok(set)
}

impl VisualFeatureSet {
    /// Reads `panels.json`; image paths in it are relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut set: Self = crate::io::read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        set.svg_path = dir.join(&set.svg_path);
        set.png_path = set.png_path.map(|p| dir.join(p));
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::zipf_profile;
    use super::super::{layout_panel, Canvas};
    use super::*;

    fn panels(k: usize) -> Vec<WordCloudPanel> {
        (0..k)
            .map(|c| layout_panel(&zipf_profile(c, 25, c as u64), Canvas { width: 300.0, height: 240.0 }, 60, c as u64).unwrap())
            .collect()
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(8), (3, 3));
        assert_eq!(grid_shape(1), (1, 1));
        assert_eq!(grid_shape(4), (2, 2));
        assert_eq!(grid_shape(5), (2, 3));
    }

    #[test]
    fn eight_panels_titled_in_order() {
        let svg = compose_grid(&panels(8), 8).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let titles: Vec<&str> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("title"))
            .map(|n| n.text().unwrap())
            .collect();
        let want: Vec<String> = (0..8).map(|i| format!("Cluster {i}")).collect();
        assert_eq!(titles, want);
        assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("panel")).count(), 8);
    }

    #[test]
    fn compose_is_byte_deterministic() {
        assert_eq!(compose_grid(&panels(3), 3).unwrap(), compose_grid(&panels(3), 3).unwrap());
    }

    #[test]
    fn wrong_order_rejected() {
        let mut p = panels(2);
        p.swap(0, 1);
        assert!(compose_grid(&p, 2).is_err());
        assert!(compose_grid(&panels(2), 3).is_err());
    }

    #[test]
    fn writes_svg_png_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let set = write_visual_features(dir.path(), panels(2), 2, Some(400)).unwrap();
        assert_eq!(set.grid, (1, 2));
        let loaded = VisualFeatureSet::load(&dir.path().join("panels.json")).unwrap();
        assert_eq!(loaded, set);
        let png = std::fs::read(set.png_path.unwrap()).unwrap();
        let img = image::load_from_memory(&png).unwrap();
        assert_eq!(img.width(), 400);
        assert!(std::fs::read_to_string(set.svg_path).unwrap().starts_with("<svg"));
    }
}
