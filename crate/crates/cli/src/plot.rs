//! Minimal deterministic SVG line charts. The CSVs written alongside are
//! the source of truth; these files are display artifacts, so the geometry
//! is rounded to fixed precision to keep regeneration byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{rfail, CliResult};

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 44.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt(v: f64) -> String {
    // fixed precision keeps the file stable; strip the trailing zeros noise
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn sig(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        fmt(v)
    }
}

/// Writes a line chart of the given series. Non-finite points are skipped;
/// an all-empty chart still renders axes.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> CliResult<()> {
    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (x0, x1) = finite
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    let (y0, y1) = finite
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    let (x0, x1) = if finite.is_empty() { (0.0, 1.0) } else { (x0, x1) };
    let (y0, y1) = if finite.is_empty() { (0.0, 1.0) } else { (y0, y1) };
    let xs = if x1 > x0 { x1 - x0 } else { 1.0 };
    let ys = if y1 > y0 { y1 - y0 } else { 1.0 };
    let px = |x: f64| MARGIN_L + (x - x0) / xs * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / ys * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        fmt(WIDTH / 2.0),
        title
    );
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>",
        l = fmt(MARGIN_L),
        r = fmt(WIDTH - MARGIN_R),
        t = fmt(MARGIN_T),
        b = fmt(HEIGHT - MARGIN_B),
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        fmt(WIDTH / 2.0),
        fmt(HEIGHT - 10.0),
        x_label
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0),
        y_label
    );
    // range labels
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
        fmt(MARGIN_L - 6.0),
        fmt(HEIGHT - MARGIN_B + 4.0),
        sig(y0),
        fmt(MARGIN_L - 6.0),
        fmt(MARGIN_T + 4.0),
        sig(y1),
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B + 18.0),
        sig(x0),
        fmt(WIDTH - MARGIN_R),
        fmt(HEIGHT - MARGIN_B + 18.0),
        sig(x1),
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            );
        }
        let ly = MARGIN_T + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"3\"/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            fmt(WIDTH - MARGIN_R - 130.0),
            fmt(ly),
            fmt(WIDTH - MARGIN_R - 110.0),
            fmt(ly),
            fmt(WIDTH - MARGIN_R - 104.0),
            fmt(ly + 4.0),
            s.label
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(rfail("writing plot"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_deterministic_and_handles_empty_series() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        let series = vec![
            Series {
                label: "loss",
                points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, f64::NAN), (3.0, 0.25)],
            },
            Series {
                label: "val",
                points: vec![],
            },
        ];
        line_chart(&a, "curves", "epoch", "value", &series).unwrap();
        line_chart(&b, "curves", "epoch", "value", &series).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        line_chart(&a, "empty", "x", "y", &[]).unwrap();
        assert!(std::fs::read_to_string(&a).unwrap().contains("</svg>"));
    }
}
