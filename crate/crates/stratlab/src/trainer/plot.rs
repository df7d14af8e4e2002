//! SVG line charts from metrics CSVs, one file per metric.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::metrics::MetricsRow;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_line_chart(title: &str, points: &[(f64, f64)]) -> String {
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(_, y)| y.is_finite()).collect();
    let (x_min, x_max) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    let (y_min, y_max) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let px = |x: f64| MARGIN + (x - x_min) / x_span * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y_min) / y_span * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        s,
        r#"<text x="{}" y="24" font-family="monospace" font-size="14">{title}</text>"#,
        MARGIN
    );
    // axes
    let _ = write!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    let _ = write!(
        s,
        r#"<text x="{m}" y="{y}" font-family="monospace" font-size="10">{x_min:.0}</text><text x="{r}" y="{y}" font-family="monospace" font-size="10" text-anchor="end">{x_max:.0}</text>"#,
        m = MARGIN,
        y = H - MARGIN + 16.0,
        r = W - MARGIN
    );
    let _ = write!(
        s,
        r#"<text x="4" y="{b}" font-family="monospace" font-size="10">{y_min:.3}</text><text x="4" y="{t}" font-family="monospace" font-size="10">{y_max:.3}</text>"#,
        b = H - MARGIN,
        t = MARGIN + 4.0
    );
    if !finite.is_empty() {
        let mut path = String::new();
        for (i, (x, y)) in finite.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(*x), py(*y));
        }
        let _ = write!(s, r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.trim());
    }
    s.push_str("</svg>");
    s
}

/// Write one SVG per metric next to `out_dir`.
pub fn plot_metrics(rows: &[MetricsRow], out_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let series: [(&str, Box<dyn Fn(&MetricsRow) -> f64>); 7] = [
        ("return_mean", Box::new(|r| r.return_mean)),
        ("td_loss", Box::new(|r| r.td_loss)),
        ("j_mi", Box::new(|r| r.j_mi)),
        ("j_e", Box::new(|r| r.j_e)),
        ("j_m", Box::new(|r| r.j_m)),
        ("surprise_mean", Box::new(|r| r.surprise_mean)),
        ("eps", Box::new(|r| r.eps)),
    ];
    let mut written = Vec::new();
    for (name, f) in &series {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.step as f64, f(r))).collect();
        let svg = svg_line_chart(name, &points);
        let path = out_dir.join(format!("{name}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path.to_string_lossy().into_owned());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_svg_per_metric() {
        let rows = vec![
            MetricsRow { step: 0, return_mean: 1.0, ..Default::default() },
            MetricsRow { step: 100, return_mean: 2.0, ..Default::default() },
        ];
        let dir = std::env::temp_dir().join("stratlab-plot-test");
        let files = plot_metrics(&rows, &dir).unwrap();
        assert_eq!(files.len(), 7);
        let content = std::fs::read_to_string(&files[0]).unwrap();
        assert!(content.starts_with("<svg"));
        assert!(content.contains("path"));
        std::fs::remove_dir_all(dir).ok();
    }
}
