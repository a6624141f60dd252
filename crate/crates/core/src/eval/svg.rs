//! Deterministic SVG charts. Numbers are written with fixed precision so
//! identical input yields identical bytes.

use std::fmt::Write;

use ndarray::Array2;

use super::keys::{label_name, Key, Keyscape};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const LEGEND_W: f64 = 100.0;
const NONE_COLOR: &str = "#bdbdbd";

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );
}

fn footer(out: &mut String) {
    out.push_str("</svg>\n");
}

/// Linear blend from near-white to dark blue, `u` in `[0, 1]`.
fn ramp(u: f64) -> String {
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
    let lo = [247.0, 251.0, 255.0];
    let hi = [8.0, 48.0, 107.0];
    let c: Vec<u8> = (0..3).map(|i| (lo[i] + (hi[i] - lo[i]) * u).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn ramp_legend(out: &mut String, lo: f64, hi: f64) {
    let x = WIDTH - LEGEND_W + 20.0;
    let h = HEIGHT - 2.0 * MARGIN;
    let steps = 20;
    for s in 0..steps {
        let u = 1.0 - s as f64 / (steps - 1) as f64;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{x:.2}" y="{:.2}" width="20.00" height="{:.2}" fill="{}"/>"#,
            MARGIN + h * s as f64 / steps as f64,
            h / steps as f64,
            ramp(u)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="10">{hi:.4}</text>
<text x="{:.2}" y="{:.2}" font-size="10">{lo:.4}</text>"#,
        x + 24.0,
        MARGIN + 8.0,
        x + 24.0,
        HEIGHT - MARGIN
    );
}

/// Matrix as a grid of `class="cell"` rectangles, row 0 at the top.
pub fn render_heatmap(matrix: &Array2<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("cannot render an empty matrix".into()));
    }
    let (lo, hi) = range(matrix.iter().copied());
    let span = hi - lo;
    let cw = (WIDTH - 2.0 * MARGIN - LEGEND_W) / cols as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / rows as f64;
    let mut out = String::new();
    header(&mut out);
    for ((r, c), &x) in matrix.indexed_iter() {
        let u = if span > 0.0 { (x - lo) / span } else { 0.0 };
        let _ = writeln!(
            out,
            r#"<rect class="cell" x="{:.3}" y="{:.3}" width="{cw:.3}" height="{ch:.3}" fill="{}"/>"#,
            MARGIN + c as f64 * cw,
            MARGIN + r as f64 * ch,
            ramp(u)
        );
    }
    ramp_legend(&mut out, lo, hi);
    footer(&mut out);
    Ok(out.into_bytes())
}

/// Bar chart around a zero baseline; negative values hang below it.
pub fn render_bars(values: &[f64]) -> Result<Vec<u8>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot render an empty vector".into()));
    }
    let (lo, hi) = range(values.iter().copied());
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bw = (WIDTH - 2.0 * MARGIN) / values.len() as f64;
    let zero_y = MARGIN + plot_h * hi / span;
    let mut out = String::new();
    header(&mut out);
    for (i, &v) in values.iter().enumerate() {
        let h = plot_h * v.abs() / span;
        let y = if v >= 0.0 { zero_y - h } else { zero_y };
        let _ = writeln!(
            out,
            r##"<rect class="bar" x="{:.3}" y="{y:.3}" width="{:.3}" height="{h:.3}" fill="#2171b5"/>"##,
            MARGIN + i as f64 * bw + 0.1 * bw,
            0.8 * bw
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN:.3}" y1="{zero_y:.3}" x2="{:.3}" y2="{zero_y:.3}" stroke="#000000" stroke-width="1"/>
<text x="4.00" y="{:.2}" font-size="10">{hi:.4}</text>
<text x="4.00" y="{:.2}" font-size="10">{lo:.4}</text>"##,
        WIDTH - MARGIN,
        MARGIN + 8.0,
        HEIGHT - MARGIN
    );
    footer(&mut out);
    Ok(out.into_bytes())
}

/// Fixed color per key: hue walks the circle of fifths, minor keys darker.
pub fn key_color(key: Key) -> String {
    let fifths = (key.tonic() * 7) % 12;
    let hue = fifths as f64 * 30.0;
    let light = if key.is_minor() { 0.35 } else { 0.6 };
    hsl_hex(hue, 0.7, light)
}

fn hsl_hex(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to8 = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to8(r), to8(g), to8(b))
}

/// Triangle of key cells, apex at the top; each level doubles the number
/// of windows and widens the row.
pub fn render_keyscape(scape: &Keyscape) -> Result<Vec<u8>> {
    let n_levels = scape.levels.len();
    if n_levels == 0 {
        return Err(Error::InvalidArgument("keyscape has no levels".into()));
    }
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_W - 40.0;
    let row_h = (HEIGHT - 2.0 * MARGIN) / n_levels as f64;
    let center = MARGIN + plot_w / 2.0;
    let mut out = String::new();
    header(&mut out);
    for (l, row) in scape.levels.iter().enumerate() {
        let row_w = plot_w * (l + 1) as f64 / n_levels as f64;
        let cw = row_w / row.len() as f64;
        for (i, label) in row.iter().enumerate() {
            let fill = label.map_or_else(|| NONE_COLOR.to_string(), key_color);
            let _ = writeln!(
                out,
                r#"<rect class="cell" x="{:.3}" y="{:.3}" width="{cw:.3}" height="{row_h:.3}" fill="{fill}"><title>{}</title></rect>"#,
                center - row_w / 2.0 + i as f64 * cw,
                MARGIN + l as f64 * row_h,
                label_name(*label)
            );
        }
    }
    let lx = WIDTH - LEGEND_W - 30.0;
    let lh = (HEIGHT - 2.0 * MARGIN) / 25.0;
    let entries = (0..24).map(Key::from_index).chain(std::iter::once(None));
    for (i, label) in entries.enumerate() {
        let fill = label.map_or_else(|| NONE_COLOR.to_string(), key_color);
        let y = MARGIN + i as f64 * lh;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{lx:.2}" y="{y:.2}" width="12.00" height="{:.2}" fill="{fill}"/>
<text x="{:.2}" y="{:.2}" font-size="9">{}</text>"#,
            lh * 0.9,
            lx + 16.0,
            y + lh * 0.8,
            label_name(label)
        );
    }
    footer(&mut out);
    Ok(out.into_bytes())
}
