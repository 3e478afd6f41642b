//! Regret-versus-cost figures as standalone SVG.

use std::fmt::Write as _;

use crate::{Error, Result};

/// One mode's curve: `(cost, mean, optional halfwidth)` points in cost order.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, Option<f64>)>,
}

impl Series {
    fn has_band(&self) -> bool {
        self.points.iter().all(|p| p.2.is_some())
    }
}

/// Parsed aggregate table plus warnings about missing intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotInput {
    pub series: Vec<Series>,
    pub warnings: Vec<String>,
}

/// Reads an aggregate CSV (`mode, checkpoint_cost, mean_regret[, ci95_halfwidth], ...`).
pub fn read_aggregate(text: &str) -> Result<PlotInput> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Config(format!("aggregate csv: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(mode_col), Some(cost_col), Some(mean_col)) = (col("mode"), col("checkpoint_cost"), col("mean_regret")) else {
        return Err(Error::Config("aggregate csv needs mode, checkpoint_cost and mean_regret columns".into()));
    };
    let ci_col = col("ci95_halfwidth");
    let mut warnings = Vec::new();
    if ci_col.is_none() {
        warnings.push("no ci95_halfwidth column; plotting curves without bands".to_string());
    }
    let mut series: Vec<Series> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Config(format!("aggregate csv: {e}")))?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let num = |c: usize, what: &str| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| Error::Config(format!("aggregate csv row {}: bad {what} {:?}", line + 2, field(c))))
        };
        let cost = num(cost_col, "checkpoint_cost")?;
        let mean = num(mean_col, "mean_regret")?;
        let ci = match ci_col {
            Some(c) if !field(c).is_empty() => Some(num(c, "ci95_halfwidth")?),
            _ => None,
        };
        let label = field(mode_col).to_string();
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((cost, mean, ci)),
            None => series.push(Series { label, points: vec![(cost, mean, ci)] }),
        }
    }
    if series.is_empty() {
        return Err(Error::Empty("aggregate rows"));
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if ci_col.is_some() && !s.has_band() {
            warnings.push(format!("{}: confidence interval missing for some checkpoints; no band drawn", s.label));
        }
    }
    Ok(PlotInput { series, warnings })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders the series as an SVG document. Output depends only on the input.
pub fn render_svg(input: &PlotInput) -> String {
    let pts = input.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(c, m, ci) in pts {
        let h = ci.unwrap_or(0.0);
        x0 = x0.min(c);
        x1 = x1.max(c);
        y0 = y0.min(m - h);
        y1 = y1.max(m + h);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |c: f64| LEFT + (c - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + (1.0 - (v - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">cumulative cost</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">mean Bayesian regret</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, s) in input.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.has_band() {
            let mut poly: Vec<String> = s.points.iter().map(|&(c, m, h)| format!("{:.2},{:.2}", sx(c), sy(m + h.unwrap_or(0.0)))).collect();
            poly.extend(s.points.iter().rev().map(|&(c, m, h)| format!("{:.2},{:.2}", sx(c), sy(m - h.unwrap_or(0.0)))));
            let _ = writeln!(svg, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
        }
        let line: Vec<String> = s.points.iter().map(|&(c, m, _)| format!("{:.2},{:.2}", sx(c), sy(m))).collect();
        let _ = writeln!(svg, r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 10.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 25.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
