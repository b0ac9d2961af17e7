//! Minimal deterministic SVG line charts.

use std::fmt::Write;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];
const MARGIN: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartOptions {
    pub width: f64,
    pub height: f64,
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
    pub x_label: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn transform(v: f64, log: bool) -> Option<f64> {
    match (log, v.is_finite()) {
        (_, false) => None,
        (true, _) if v <= 0.0 => None,
        (true, _) => Some(v.log10()),
        (false, _) => Some(v),
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{v:.2}")
    } else {
        format!("{v:.4e}")
    }
}

/// Renders `series` as polylines over shared axes. Points that are not
/// finite, or not positive on a log axis, are dropped; series left empty
/// draw nothing.
pub fn line_chart(series: &[Series], opts: &ChartOptions) -> String {
    let projected: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter_map(|&(x, y)| Some((transform(x, opts.log_x)?, transform(y, opts.log_y)?)))
                .collect()
        })
        .collect();
    let (x0, x1) = range(projected.iter().flatten().map(|p| p.0));
    let (y0, y1) = range(projected.iter().flatten().map(|p| p.1));
    let (w, h) = (opts.width, opts.height);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (w - 2.0 * MARGIN);
    let sy = |y: f64| h - MARGIN - (y - y0) / (y1 - y0) * (h - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if let Some(title) = &opts.title {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
            w / 2.0,
            MARGIN / 2.0,
            escape(title)
        );
    }
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{m:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}"/><line x1="{m:.2}" y1="{b:.2}" x2="{m:.2}" y2="{t:.2}"/></g>"#,
        m = MARGIN,
        b = h - MARGIN,
        r = w - MARGIN,
        t = MARGIN
    );
    let _ = writeln!(
        s,
        r#"<g font-size="10"><text x="{:.2}" y="{:.2}" text-anchor="start">{}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text></g>"#,
        MARGIN,
        h - MARGIN + 15.0,
        tick_label(x0, opts.log_x),
        w - MARGIN,
        h - MARGIN + 15.0,
        tick_label(x1, opts.log_x),
        MARGIN - 5.0,
        h - MARGIN,
        tick_label(y0, opts.log_y),
        MARGIN - 5.0,
        MARGIN + 4.0,
        tick_label(y1, opts.log_y),
        w / 2.0,
        h - MARGIN / 4.0,
        escape(&opts.x_label)
    );
    for (k, (serie, pts)) in series.iter().zip(&projected).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{color}">{}</text>"#,
            w - MARGIN + 5.0,
            MARGIN + 12.0 * k as f64,
            escape(&serie.name)
        );
        if pts.is_empty() {
            continue;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
