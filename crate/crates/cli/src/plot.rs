//! CSV columns to a standalone SVG line chart.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::manifest::write_text;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads `x` and each of `ys` from a CSV with a header row.
pub fn read_series(csv_path: &Path, x: &str, ys: &[String]) -> CliResult<Vec<Series>> {
    if ys.is_empty() {
        return Err(CliError::usage("plot: at least one y column is required"));
    }
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::usage(format!(
                "plot: column '{name}' not found in {}",
                csv_path.display()
            ))
        })
    };
    let xi = column(x)?;
    let yis = ys
        .iter()
        .map(|y| column(y))
        .collect::<CliResult<Vec<_>>>()?;

    let mut series: Vec<Series> = ys
        .iter()
        .map(|name| Series {
            name: name.clone(),
            points: Vec::new(),
        })
        .collect();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let number = |i: usize, name: &str| -> CliResult<f64> {
            let cell = record.get(i).unwrap_or("");
            cell.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "plot: row {}: column '{name}' holds '{cell}', not a finite number",
                        line + 2
                    ))
                })
        };
        let xv = number(xi, x)?;
        for (s, (&yi, name)) in series.iter_mut().zip(yis.iter().zip(ys)) {
            s.points.push((xv, number(yi, name)?));
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(CliError::usage(format!(
            "plot: need at least 2 data rows, found {rows}"
        )));
    }
    Ok(series)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

/// Renders the chart. Output depends only on the inputs.
pub fn render_svg(series: &[Series], x_label: &str, title: &str) -> String {
    let (x0, x1) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    // Axes, grid and ticks.
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" stroke-width="1">
<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>
<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/>
</g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>
<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>
<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>
<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            tick_label(xv),
            LEFT + plot_w,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>
<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn run(
    csv_path: &Path,
    x: &str,
    ys: &[String],
    out: &Path,
    title: Option<&str>,
) -> CliResult<()> {
    let series = read_series(csv_path, x, ys)?;
    let default_title = format!("{} vs {x}", ys.join(", "));
    write_text(
        out,
        &render_svg(&series, x, title.unwrap_or(&default_title)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_labels_are_compact() {
        assert_eq!(tick_label(0.5), "0.5");
        assert_eq!(tick_label(-0.0), "0");
        assert_eq!(tick_label(2.0), "2");
        assert_eq!(tick_label(1.5e-6), "1.50e-6");
    }

    #[test]
    fn flat_series_still_gets_a_range() {
        assert_eq!(padded_range([3.0, 3.0].into_iter()), (1.5, 4.5));
        assert_eq!(padded_range([0.0].into_iter()), (-1.0, 1.0));
    }

    #[test]
    fn one_polyline_per_series() {
        let s = |name: &str| Series {
            name: name.into(),
            points: vec![(0.0, 1.0), (1.0, 2.0)],
        };
        let svg = render_svg(&[s("a"), s("b<c")], "x", "t");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }
}
