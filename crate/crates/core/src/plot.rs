//! Minimal SVG line charts from report CSV files: one polyline per series
//! plus two labelled axes.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Column whose values split rows into separate lines.
    pub series: Option<String>,
    /// Keep only rows where each `(column, value)` pair matches.
    pub filters: Vec<(String, String)>,
    pub title: Option<String>,
}

impl PlotSpec {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            ..Self::default()
        }
    }

    /// Defaults for `report.csv`: FNR against parameter, one line per strategy.
    pub fn report(perturbation: &str) -> Self {
        Self {
            series: Some("strategy".into()),
            filters: vec![("perturbation".into(), perturbation.into())],
            title: Some(perturbation.into()),
            ..Self::new("parameter", "fnr")
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format(format!("CSV has no column {name:?}")))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Series name to `(x, y)` points, sorted by x. Rows with an empty or
/// non-finite coordinate are skipped.
pub fn collect_series(csv_text: &str, spec: &PlotSpec) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let xi = column(&headers, &spec.x)?;
    let yi = column(&headers, &spec.y)?;
    let si = spec.series.as_deref().map(|s| column(&headers, s)).transpose()?;
    let filters = spec
        .filters
        .iter()
        .map(|(c, v)| Ok((column(&headers, c)?, v.as_str())))
        .collect::<Result<Vec<_>>>()?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        if filters.iter().any(|&(i, v)| row.get(i) != Some(v)) {
            continue;
        }
        let parse = |i: usize| row.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        let (Some(x), Some(y)) = (parse(xi), parse(yi)) else { continue };
        let name = si.and_then(|i| row.get(i)).unwrap_or(&spec.y).to_string();
        series.entry(name).or_default().push((x, y));
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(series)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the CSV as an SVG document. Fails if no row survives filtering.
pub fn render_svg(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let series = collect_series(csv_text, spec)?;
    if series.values().all(Vec::is_empty) {
        return Err(Error::Format("no plottable rows in CSV".into()));
    }
    let all = || series.values().flatten();
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().map(|p| p.1));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(title) = &spec.title {
        let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
    }
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    let tick = |v: f64| format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string();
    for (v, anchor, x, y) in [
        (x0, "start", left, bottom + 18.0),
        (x1, "end", right, bottom + 18.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="12">{}</text>"#, tick(v));
    }
    for (v, y) in [(y0, bottom), (y1, top + 4.0)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end" font-size="12">{}</text>"#, left - 6.0, tick(v));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&spec.y)
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            right + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
