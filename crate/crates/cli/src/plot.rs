//! Line charts of metrics CSVs: one mean line per group with a band of one
//! sample standard deviation across the group's files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::usage;

pub const DEFAULT_METRIC: &str = "eval_return_mean";
const X_COLUMN: &str = "env_step";

/// `(x, y)` points of `metric` in one CSV; rows with an empty metric are
/// skipped.
pub fn read_series(path: &Path, metric: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("{} has no `{name}` column", path.display())))
    };
    let (xi, yi) = (col(X_COLUMN)?, col(metric)?);
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let (x, y) = (rec.get(xi).unwrap_or(""), rec.get(yi).unwrap_or(""));
        if y.is_empty() {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| usage(format!("{}: `{s}` is not a number", path.display())))
        };
        points.push((parse(x)?, parse(y)?));
    }
    Ok(points)
}

/// The `VALUE` of the first `KEY=VALUE` fragment in any path component,
/// fragments being separated by `_`.
pub fn group_value(path: &Path, key: &str) -> Option<String> {
    let prefix = format!("{key}=");
    path.components().find_map(|c| {
        c.as_os_str()
            .to_str()?
            .split('_')
            .find_map(|frag| frag.strip_prefix(&prefix).map(str::to_string))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 with a single file.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: String,
    pub points: Vec<BandPoint>,
}

/// Aggregates files into groups, keyed by `group_by` (all files form one
/// group when `None`). Within a file, the last row at each x counts.
pub fn aggregate(inputs: &[PathBuf], metric: &str, group_by: Option<&str>) -> Result<Vec<Group>> {
    if inputs.is_empty() {
        return Err(usage("no input files"));
    }
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let mut any = false;
    for path in inputs {
        let label = match group_by {
            Some(key) => group_value(path, key)
                .map(|v| format!("{key}={v}"))
                .ok_or_else(|| usage(format!("{} has no `{key}=` component", path.display())))?,
            None => metric.to_string(),
        };
        // One value per x and file: the last row logged at that x.
        let series: BTreeMap<u64, f64> = read_series(path, metric)?
            .into_iter()
            .map(|(x, y)| (x.to_bits(), y))
            .collect();
        any |= !series.is_empty();
        let group = groups.entry(label).or_default();
        for (x, y) in series {
            group.entry(x).or_default().push(y);
        }
    }
    if !any {
        return Err(usage(format!("no `{metric}` values in the inputs")));
    }
    let mut out: Vec<Group> = groups
        .into_iter()
        .map(|(label, by_x)| {
            let mut points: Vec<BandPoint> = by_x
                .into_iter()
                .map(|(bits, ys)| {
                    let n = ys.len() as f64;
                    let mean = ys.iter().sum::<f64>() / n;
                    let std = if ys.len() > 1 {
                        (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    BandPoint {
                        x: f64::from_bits(bits),
                        mean,
                        std,
                        count: ys.len(),
                    }
                })
                .collect();
            points.sort_by(|a, b| a.x.total_cmp(&b.x));
            Group { label, points }
        })
        .collect();
    // Numeric group values sort numerically.
    out.sort_by(|a, b| {
        let num = |g: &Group| g.label.rsplit('=').next().and_then(|v| v.parse::<f64>().ok());
        match (num(a), num(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => a.label.cmp(&b.label),
        }
    });
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;

/// SVG chart: a polyline per group and, where a group has several files, a
/// filled band of ± one sample standard deviation.
pub fn render_svg(groups: &[Group], metric: &str) -> String {
    let pts = groups.iter().flat_map(|g| &g.points);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.mean - p.std);
        y1 = y1.max(p.mean + p.std);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#
    );
    let text = |s: &mut String, x: f64, y: f64, anchor: &str, body: &str| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{body}</text>"#
        );
    };
    text(&mut s, l, b + 18.0, "middle", &format!("{x0}"));
    text(&mut s, r, b + 18.0, "middle", &format!("{x1}"));
    text(&mut s, (l + r) / 2.0, b + 36.0, "middle", X_COLUMN);
    text(&mut s, l - 6.0, b, "end", &format!("{y0:.3}"));
    text(&mut s, l - 6.0, t + 4.0, "end", &format!("{y1:.3}"));
    text(&mut s, (l + r) / 2.0, t - 24.0, "middle", metric);

    for (i, g) in groups.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        if g.points.iter().any(|p| p.count > 1) {
            let upper = g.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean + p.std)));
            let lower = g.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean - p.std)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let line: Vec<String> = g.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="line" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = t + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/>"#,
            r - 120.0,
            r - 100.0
        );
        text(&mut s, r - 95.0, ly + 4.0, "start", &g.label);
    }
    s.push_str("</svg>\n");
    s
}
