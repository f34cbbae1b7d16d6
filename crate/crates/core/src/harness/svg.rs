//! Minimal deterministic SVG line plots. No plotting dependency: the
//! output must be byte-stable across runs and platforms, and the plots
//! are simple enough (polylines, axes, legend) to emit directly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    Solid,
    Dashed,
}

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub color: String,
    pub style: PlotStyle,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick label: fixed precision with trailing zeros trimmed, so integer
/// ticks print as integers.
fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

fn bounds(series: &[PlotSeries]) -> ((f64, f64), (f64, f64)) {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax - xmin < 1e-12 {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if ymax - ymin < 1e-12 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    ((xmin, xmax), (ymin, ymax))
}

/// Writes a line plot with axes, five ticks per axis, and a legend. The
/// provenance string is embedded as a trailing comment.
pub fn plot_lines(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[PlotSeries],
    provenance: &str,
) -> Result<(), HarnessError> {
    let ((xmin, xmax), (ymin, ymax)) = bounds(series);
    let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - ymin) / (ymax - ymin) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(w, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##)?;
    writeln!(
        w,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        esc(title)
    )?;

    // axes
    let x0 = px(xmin);
    let x1 = px(xmax);
    let y0 = py(ymin);
    let y1 = py(ymax);
    writeln!(
        w,
        r##"<path d="M {x0:.1} {y1:.1} L {x0:.1} {y0:.1} L {x1:.1} {y0:.1}" fill="none" stroke="#000000" stroke-width="1"/>"##
    )?;

    // ticks and grid
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = xmin + t * (xmax - xmin);
        let yv = ymin + t * (ymax - ymin);
        let xp = px(xv);
        let yp = py(yv);
        writeln!(
            w,
            r##"<line x1="{xp:.1}" y1="{y0:.1}" x2="{xp:.1}" y2="{:.1}" stroke="#000000" stroke-width="1"/>"##,
            y0 + 5.0
        )?;
        writeln!(
            w,
            r#"<text x="{xp:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            tick_label(xv)
        )?;
        if i > 0 {
            writeln!(
                w,
                r##"<line x1="{x0:.1}" y1="{yp:.1}" x2="{x1:.1}" y2="{yp:.1}" stroke="#dddddd" stroke-width="1"/>"##
            )?;
        }
        writeln!(
            w,
            r##"<line x1="{:.1}" y1="{yp:.1}" x2="{x0:.1}" y2="{yp:.1}" stroke="#000000" stroke-width="1"/>"##,
            x0 - 5.0
        )?;
        writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            yp + 4.0,
            tick_label(yv)
        )?;
    }

    // axis labels
    writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        esc(x_label)
    )?;
    writeln!(
        w,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    )?;

    // series
    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let dash = match s.style {
            PlotStyle::Solid => String::new(),
            PlotStyle::Dashed => r#" stroke-dasharray="6 4""#.to_owned(),
        };
        writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"{}/>"#,
            pts.join(" "),
            s.color,
            dash
        )?;
    }

    // legend, top right; unnamed series stay out of it
    for (i, s) in series.iter().filter(|s| !s.name.is_empty()).enumerate() {
        let ly = MARGIN_T + 8.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R - 150.0;
        let dash = match s.style {
            PlotStyle::Solid => String::new(),
            PlotStyle::Dashed => r#" stroke-dasharray="6 4""#.to_owned(),
        };
        writeln!(
            w,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="1.8"{}/>"#,
            lx + 28.0,
            s.color,
            dash
        )?;
        writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 34.0,
            ly + 4.0,
            esc(&s.name)
        )?;
    }

    // double hyphens would end the comment early
    writeln!(w, "<!-- config: {} -->", provenance.replace("--", "- -"))?;
    writeln!(w, "</svg>")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_series() -> Vec<PlotSeries> {
        vec![
            PlotSeries {
                name: "tree".into(),
                color: "#1f77b4".into(),
                style: PlotStyle::Solid,
                points: vec![(1.0, 0.9), (2.0, 0.5), (3.0, 0.2)],
            },
            PlotSeries {
                name: "random".into(),
                color: "#2ca02c".into(),
                style: PlotStyle::Dashed,
                points: vec![(1.0, 0.9), (2.0, 0.8), (3.0, 0.7)],
            },
        ]
    }

    #[test]
    fn plot_is_wellformed_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.svg");
        let p2 = dir.path().join("b.svg");
        let s = sample_series();
        plot_lines(&p1, "t", "iteration", "distance", &s, r#"{"x":1}"#).unwrap();
        plot_lines(&p2, "t", "iteration", "distance", &s, r#"{"x":1}"#).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);

        let text = String::from_utf8(b1).unwrap();
        assert!(text.starts_with("<svg "));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(text.contains("stroke-dasharray"));
        assert!(text.contains("<!-- config: {\"x\":1} -->"));
    }

    #[test]
    fn degenerate_and_empty_input_still_render() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.svg");
        plot_lines(&p, "empty", "x", "y", &[], "{}").unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("</svg>"));

        let one = vec![PlotSeries {
            name: "only".into(),
            color: "#000000".into(),
            style: PlotStyle::Solid,
            points: vec![(2.0, 2.0)],
        }];
        plot_lines(&p, "point", "x", "y", &one, "{}").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("<polyline"));
    }

    #[test]
    fn tick_labels_trim_zeros() {
        assert_eq!(tick_label(1.0), "1");
        assert_eq!(tick_label(0.25), "0.25");
        assert_eq!(tick_label(0.0), "0");
        assert_eq!(tick_label(-0.0), "-0");
        assert_eq!(tick_label(12.3456), "12.346");
    }
}
