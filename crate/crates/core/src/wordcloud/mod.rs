//! Word-cloud panels laid out on an Archimedean spiral, composed into one
//! grid image.

mod compose;
mod raster;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngram::{top_phrases, NGramProfile};

pub use compose::{compose_grid, grid_shape, write_visual_features, VisualFeatureSet};
pub use raster::rasterize;

pub const FONT_MIN: f64 = 10.0;
pub const FONT_MAX: f64 = 48.0;
pub const DEFAULT_MAX_PHRASES: usize = 60;
/// Box height as a multiple of font size.
pub const LINE_HEIGHT: f64 = 1.2;
const MIN_CANVAS: f64 = 200.0;
/// Radial gap between spiral turns, px.
const SPIRAL_PITCH: f64 = 4.0;
/// Arc length between spiral probes, px.
const SPIRAL_STEP: f64 = 3.0;
/// Horizontal clearance kept between neighbouring phrases.
const PHRASE_GAP: f64 = 3.0;

pub const PHRASE_PALETTE: [&str; 8] = [
    "#1b5e20", "#0d47a1", "#b71c1c", "#4a148c", "#e65100", "#006064", "#3e2723", "#827717",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Self { width: 800.0, height: 600.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn intersects(&self, o: &BBox) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn inside(&self, canvas: Canvas) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= canvas.width && self.y + self.h <= canvas.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedPhrase {
    pub phrase: String,
    pub count: u64,
    pub font_size: f64,
    /// Centre of the bounding box.
    pub position: (f64, f64),
    pub bbox: BBox,
    pub color_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloudPanel {
    pub cluster_index: usize,
    pub canvas: Canvas,
    pub placements: Vec<PlacedPhrase>,
    pub seed: u64,
    pub dropped: usize,
}

/// Advance width of `ch` at unit font size.
pub fn char_advance(ch: char) -> f64 {
    match ch {
        'i' | 'j' | 'l' | '.' | ',' | '\'' | '!' | '|' | ':' | ';' => 0.28,
        'f' | 't' | 'r' | 'I' | ' ' | '(' | ')' => 0.36,
        'm' | 'w' | 'M' | 'W' => 0.86,
        'a'..='z' => 0.56,
        '0'..='9' => 0.56,
        'A'..='Z' => 0.68,
        c if c.is_ascii() => 0.6,
        // wide scripts get a full em
        c if (c as u32) >= 0x2E80 => 1.0,
        _ => 0.62,
    }
}

pub fn text_width(text: &str, font_size: f64) -> f64 {
    text.chars().map(char_advance).sum::<f64>() * font_size
}

pub fn font_size_for(count: u64, count_max: u64) -> f64 {
    if count_max == 0 {
        return FONT_MIN;
    }
    FONT_MIN + (FONT_MAX - FONT_MIN) * (count as f64 / count_max as f64).sqrt()
}

pub fn layout_panel(
    profile: &NGramProfile,
    canvas: Canvas,
    max_phrases: usize,
    seed: u64,
) -> Result<WordCloudPanel> {
    if canvas.width < MIN_CANVAS || canvas.height < MIN_CANVAS {
        return Err(Error::Config(format!(
            "word-cloud canvas {}x{} is below the 200x200 minimum",
            canvas.width, canvas.height
        )));
    }
    let phrases = top_phrases(profile, max_phrases);
    let count_max = phrases.first().map_or(0, |p| p.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy) = (canvas.width / 2.0, canvas.height / 2.0);
    let r_limit = (cx * cx + cy * cy).sqrt();
    let pitch = SPIRAL_PITCH / std::f64::consts::TAU;
    let mut placements: Vec<PlacedPhrase> = Vec::new();
    let mut dropped = 0;

    for (rank, (phrase, count)) in phrases.into_iter().enumerate() {
        let font_size = font_size_for(count, count_max);
        let w = text_width(&phrase, font_size);
        let h = font_size * LINE_HEIGHT;
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let mut t = 0.0f64;
        let mut placed = None;
        if w <= canvas.width && h <= canvas.height {
            loop {
                let r = pitch * t;
                if r > r_limit {
                    break;
                }
                let (px, py) = (cx + r * (t + phase).cos(), cy + r * (t + phase).sin());
                let bbox = BBox { x: px - w / 2.0, y: py - h / 2.0, w, h };
                let padded = BBox { x: bbox.x - PHRASE_GAP, y: bbox.y, w: bbox.w + 2.0 * PHRASE_GAP, h: bbox.h };
                if bbox.inside(canvas) && !placements.iter().any(|p| p.bbox.intersects(&padded)) {
                    placed = Some(((px, py), bbox));
                    break;
                }
                t += (SPIRAL_STEP / r.max(1.0)).min(0.5);
            }
        }
        match placed {
            Some((position, bbox)) => placements.push(PlacedPhrase {
                phrase,
                count,
                font_size,
                position,
                bbox,
                color_index: rank % PHRASE_PALETTE.len(),
            }),
            None => dropped += 1,
        }
    }
    Ok(WordCloudPanel { cluster_index: profile.cluster_index, canvas, placements, seed, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    pub(crate) fn profile(cluster: usize, counts: &[(&str, u64)]) -> NGramProfile {
        NGramProfile {
            cluster_index: cluster,
            n_min: 2,
            n_max: 5,
            member_count: counts.len(),
            tokenizer_version: crate::ngram::TOKENIZER_VERSION.into(),
            counts: counts.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        }
    }

    pub(crate) fn zipf_profile(cluster: usize, n: usize, seed: u64) -> NGramProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = ["agent", "memory", "context", "window", "lager", "token", "crypto", "ramen", "quest", "loop"];
        let mut counts = BTreeMap::new();
        let mut rank = 1;
        while counts.len() < n {
            let len = rng.gen_range(2..=4);
            let phrase: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
            let phrase = phrase.join(" ");
            if !counts.contains_key(&phrase) {
                counts.insert(phrase, (1000 / rank).max(1) as u64);
                rank += 1;
            }
        }
        NGramProfile {
            cluster_index: cluster,
            n_min: 2,
            n_max: 5,
            member_count: n,
            tokenizer_version: crate::ngram::TOKENIZER_VERSION.into(),
            counts,
        }
    }

    pub(crate) fn check_geometry(panel: &WordCloudPanel) {
        for (i, a) in panel.placements.iter().enumerate() {
            assert!(a.bbox.inside(panel.canvas), "{} outside canvas", a.phrase);
            for b in &panel.placements[i + 1..] {
                assert!(!a.bbox.intersects(&b.bbox), "{} overlaps {}", a.phrase, b.phrase);
                if a.count > b.count {
                    assert!(a.font_size >= b.font_size);
                }
                if b.count > a.count {
                    assert!(b.font_size >= a.font_size);
                }
            }
        }
    }

    #[test]
    fn single_phrase_at_centre_with_max_font() {
        let p = layout_panel(&profile(0, &[("context window", 7)]), Canvas::default(), 60, 3).unwrap();
        assert_eq!(p.placements.len(), 1);
        let only = &p.placements[0];
        assert_eq!(only.position, (400.0, 300.0));
        assert_eq!(only.font_size, FONT_MAX);
    }

    #[test]
    fn equal_counts_equal_fonts() {
        let p = layout_panel(&profile(0, &[("mexican lager", 4), ("craft beer", 4)]), Canvas::default(), 60, 9)
            .unwrap();
        assert_eq!(p.placements.len(), 2);
        assert_eq!(p.placements[0].font_size, p.placements[1].font_size);
        check_geometry(&p);
    }

    #[test]
    fn zipfian_sixty_is_disjoint() {
        let prof = zipf_profile(0, 60, 11);
        let p = layout_panel(&prof, Canvas::default(), 60, 11).unwrap();
        assert_eq!(p.placements.len() + p.dropped, 60);
        check_geometry(&p);
    }

    #[test]
    fn empty_profile_gives_empty_panel() {
        let p = layout_panel(&profile(2, &[]), Canvas::default(), 60, 0).unwrap();
        assert!(p.placements.is_empty());
        assert_eq!(p.dropped, 0);
    }

    #[test]
    fn small_canvas_rejected() {
        let c = Canvas { width: 199.0, height: 400.0 };
        assert!(layout_panel(&profile(0, &[("a b", 1)]), c, 60, 0).is_err());
    }

    #[test]
    fn crowded_canvas_drops_and_counts() {
        let prof = zipf_profile(0, 120, 5);
        let p = layout_panel(&prof, Canvas { width: 200.0, height: 200.0 }, 120, 5).unwrap();
        assert!(p.dropped > 0);
        assert_eq!(p.placements.len() + p.dropped, 120);
        check_geometry(&p);
    }

    #[test]
    fn layout_is_seeded() {
        let prof = zipf_profile(1, 40, 2);
        let a = layout_panel(&prof, Canvas::default(), 60, 8).unwrap();
        assert_eq!(a, layout_panel(&prof, Canvas::default(), 60, 8).unwrap());
    }
}
