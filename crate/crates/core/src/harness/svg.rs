//! Self-contained SVG plots with fixed geometry.
//!
//! Every plot uses the same frame: the plotting area is inset by
//! [`MARGIN_LEFT`], [`MARGIN_RIGHT`], [`MARGIN_TOP`] and [`MARGIN_BOTTOM`]
//! pixels from the canvas edges, the title is centred 24 px from the top, the
//! y axis carries five evenly spaced ticks, and all coordinates are written
//! with two decimals so output is byte-stable. Default canvas: 800x600.

use std::fmt::Write;

use super::CurveBand;
use crate::metrics::quantile_sorted;

pub const DEFAULT_WIDTH: u32 = 800;
pub const DEFAULT_HEIGHT: u32 = 600;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 20.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 70.0;
const Y_TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Size {
    pub width: u32,
    pub height: u32,
}

impl Default for Size {
    fn default() -> Self {
        Self { width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT }
    }
}

struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn new(size: Size, y_lo: f64, y_hi: f64) -> Self {
        let (y_lo, y_hi) = if y_hi > y_lo { (y_lo, y_hi) } else { (y_lo - 0.5, y_lo + 0.5) };
        Self {
            left: MARGIN_LEFT,
            right: f64::from(size.width) - MARGIN_RIGHT,
            top: MARGIN_TOP,
            bottom: f64::from(size.height) - MARGIN_BOTTOM,
            y_lo,
            y_hi,
        }
    }

    fn y(&self, v: f64) -> f64 {
        self.bottom - (v - self.y_lo) / (self.y_hi - self.y_lo) * (self.bottom - self.top)
    }

    fn x_unit(&self, u: f64) -> f64 {
        self.left + u * (self.right - self.left)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64, span: f64) -> String {
    let decimals = if span > 0.0 { (2.0 - span.log10().floor()).clamp(0.0, 8.0) as usize } else { 2 };
    format!("{v:.decimals$}")
}

fn open(size: Size, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = size.width,
        h = size.height
    );
    let _ = writeln!(s, r#"<rect width="{}" height="{}" fill="white"/>"#, size.width, size.height);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        f64::from(size.width) / 2.0,
        escape(title)
    );
    s
}

fn y_axis(s: &mut String, f: &Frame, label: &str) {
    let _ = writeln!(
        s,
        r#"<line x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}" stroke="black"/>"#,
        l = f.left,
        t = f.top,
        b = f.bottom
    );
    let _ = writeln!(
        s,
        r#"<line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/>"#,
        l = f.left,
        r = f.right,
        b = f.bottom
    );
    let span = f.y_hi - f.y_lo;
    for i in 0..Y_TICKS {
        let v = f.y_lo + span * i as f64 / (Y_TICKS - 1) as f64;
        let y = f.y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            f.left - 5.0,
            f.left,
            f.left - 8.0,
            y + 4.0,
            tick_label(v, span)
        );
    }
    let cy = (f.top + f.bottom) / 2.0;
    let _ = writeln!(
        s,
        r#"<text x="16" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 16 {cy:.2})">{}</text>"#,
        escape(label)
    );
}

/// One box of a boxplot.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGroup {
    pub label: String,
    pub values: Vec<f64>,
}

/// Tukey boxplot: box from the first to the third quartile, median line,
/// whiskers to the most extreme values within 1.5 IQR, remaining points drawn
/// as circles. NaN values are ignored. A dashed line marks zero when it lies
/// inside the value range.
pub fn boxplot(title: &str, y_label: &str, groups: &[BoxGroup], size: Size) -> String {
    let cleaned: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut v: Vec<f64> = g.values.iter().copied().filter(|v| v.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let all = cleaned.iter().flatten();
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = (hi - lo) * 0.05;
    let frame = Frame::new(size, lo - pad, hi + pad);

    let mut s = open(size, title);
    y_axis(&mut s, &frame, y_label);
    if frame.y_lo < 0.0 && frame.y_hi > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            frame.left,
            frame.right,
            y = frame.y(0.0)
        );
    }
    let slot = (frame.right - frame.left) / groups.len().max(1) as f64;
    let half = slot * 0.3;
    for (i, (group, v)) in groups.iter().zip(&cleaned).enumerate() {
        let cx = frame.left + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="end" transform="rotate(-30 {cx:.2} {:.2})">{}</text>"#,
            frame.bottom + 16.0,
            frame.bottom + 16.0,
            escape(&group.label)
        );
        if v.is_empty() {
            continue;
        }
        let (q1, med, q3) = (quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75));
        let iqr = q3 - q1;
        let w_lo = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(q1);
        let w_hi = v.iter().rev().copied().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(q3);
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
            frame.y(w_lo),
            frame.y(w_hi)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            cx - half,
            frame.y(q3),
            2.0 * half,
            frame.y(q1) - frame.y(q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y = frame.y(med)
        );
        for &x in v.iter().filter(|&&x| x < w_lo || x > w_hi) {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2" fill="none" stroke="{color}"/>"#, frame.y(x));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Calibration curves on the unit square: the bisector dashed, each band as a
/// shaded polygon and its mean as a line. Grid points where a band is NaN
/// break the line.
pub fn curve_bands(title: &str, bands: &[(String, &CurveBand)], size: Size) -> String {
    let frame = Frame::new(size, 0.0, 1.0);
    let mut s = open(size, title);
    y_axis(&mut s, &frame, "observed frequency");
    for i in 0..Y_TICKS {
        let u = i as f64 / (Y_TICKS - 1) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            frame.x_unit(u),
            frame.bottom + 18.0,
            tick_label(u, 1.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">score</text>"#,
        (frame.left + frame.right) / 2.0,
        frame.bottom + 40.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        frame.x_unit(0.0),
        frame.y(0.0),
        frame.x_unit(1.0),
        frame.y(1.0)
    );
    for (i, (label, band)) in bands.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        for run in finite_runs(band) {
            let mut poly = String::new();
            for &j in &run {
                let _ = write!(poly, "{:.2},{:.2} ", frame.x_unit(band.grid[j]), frame.y(clamp(band.hi[j])));
            }
            for &j in run.iter().rev() {
                let _ = write!(poly, "{:.2},{:.2} ", frame.x_unit(band.grid[j]), frame.y(clamp(band.lo[j])));
            }
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.trim_end());
            let mut line = String::new();
            for &j in &run {
                let _ = write!(line, "{:.2},{:.2} ", frame.x_unit(band.grid[j]), frame.y(clamp(band.mean[j])));
            }
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.trim_end());
        }
        let ly = frame.top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            frame.left + 10.0,
            frame.left + 30.0,
            frame.left + 36.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn finite_runs(band: &CurveBand) -> Vec<Vec<usize>> {
    let mut runs = Vec::new();
    let mut current = Vec::new();
    for j in 0..band.grid.len() {
        if band.mean[j].is_finite() && band.lo[j].is_finite() && band.hi[j].is_finite() {
            current.push(j);
        } else if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}
