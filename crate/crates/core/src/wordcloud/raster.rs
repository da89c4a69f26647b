use std::io::Cursor;

use font8x8::{UnicodeFonts, BASIC_FONTS, GREEK_FONTS, LATIN_FONTS};
use image::{ImageFormat, Rgba, RgbaImage};

use super::compose::{Geometry, TITLE_BAND};
use super::{char_advance, WordCloudPanel, LINE_HEIGHT, PHRASE_PALETTE};
use crate::error::{Error, Result};

fn glyph(ch: char) -> [u8; 8] {
    BASIC_FONTS
        .get(ch)
        .or_else(|| LATIN_FONTS.get(ch))
        .or_else(|| GREEK_FONTS.get(ch))
        // hollow box for anything the bitmap font lacks
        .unwrap_or([0x7E, 0x42, 0x42, 0x42, 0x42, 0x42, 0x7E, 0x00])
}

fn hex_color(hex: &str) -> Rgba<u8> {
    let v = u32::from_str_radix(hex.trim_start_matches('#'), 16).unwrap_or(0);
    Rgba([(v >> 16) as u8, (v >> 8) as u8, v as u8, 255])
}

fn fill_rect(img: &mut RgbaImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgba<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let xa = (x0.floor() as i64).clamp(0, w);
    let xb = (x1.ceil() as i64).clamp(0, w);
    let ya = (y0.floor() as i64).clamp(0, h);
    let yb = (y1.ceil() as i64).clamp(0, h);
    for y in ya..yb {
        for x in xa..xb {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Draws `text` so that it fills the box `(x, y, w, h)`, stretching each
/// 8x8 glyph over its advance cell.
fn draw_text(img: &mut RgbaImage, text: &str, x: f64, y: f64, w: f64, h: f64, color: Rgba<u8>) {
    let units: f64 = text.chars().map(char_advance).sum();
    if units <= 0.0 {
        return;
    }
    let per_unit = w / units;
    let mut cx = x;
    for ch in text.chars() {
        let cw = char_advance(ch) * per_unit;
        let bits = glyph(ch);
        let (px, py) = (cw / 8.0, h / 8.0);
        for (row, byte) in bits.iter().enumerate() {
            for col in 0..8 {
                if byte & (1 << col) != 0 {
                    let gx = cx + col as f64 * px;
                    let gy = y + row as f64 * py;
                    fill_rect(img, gx, gy, gx + px, gy + py, color);
                }
            }
        }
        cx += cw;
    }
}

/// PNG rendering of the composed grid at the given pixel width.
pub fn rasterize(panels: &[WordCloudPanel], width: u32) -> Result<Vec<u8>> {
    if width == 0 || panels.is_empty() {
        return Err(Error::Config("PNG raster needs a positive width and at least one panel".into()));
    }
    let g = Geometry::of(panels);
    let scale = f64::from(width) / g.width;
    let height = (g.height * scale).round().max(1.0) as u32;
    let mut img = RgbaImage::from_pixel(width, height, Rgba([255, 255, 255, 255]));
    let border = Rgba([158, 158, 158, 255]);
    let panel_bg = Rgba([250, 250, 250, 255]);
    let ink = Rgba([0, 0, 0, 255]);
    for (i, panel) in panels.iter().enumerate() {
        let (ox, oy) = g.origin(i);
        let top = oy + TITLE_BAND;
        let (cw, ch) = (panel.canvas.width, panel.canvas.height);
        fill_rect(&mut img, ox * scale, top * scale, (ox + cw) * scale, (top + ch) * scale, border);
        fill_rect(&mut img, (ox + 1.0) * scale, (top + 1.0) * scale, (ox + cw - 1.0) * scale, (top + ch - 1.0) * scale, panel_bg);
        let title = format!("Cluster {}", panel.cluster_index);
        let tw = title.chars().map(char_advance).sum::<f64>() * 20.0;
        draw_text(&mut img, &title, (ox + (cw - tw) / 2.0) * scale, (oy + 6.0) * scale, tw * scale, 20.0 * scale, ink);
        for p in &panel.placements {
            let pad = p.font_size * (LINE_HEIGHT - 1.0) / 2.0;
            draw_text(
                &mut img,
                &p.phrase,
                (ox + p.bbox.x) * scale,
                (top + p.bbox.y + pad) * scale,
                p.bbox.w * scale,
                p.font_size * scale,
                hex_color(PHRASE_PALETTE[p.color_index % PHRASE_PALETTE.len()]),
            );
        }
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidInput(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}
