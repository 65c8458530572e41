//! Deterministic SVG scatter plots and line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const LEGEND_WIDTH: f64 = 150.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Maps `[lo, hi]` onto a pixel span, centering degenerate ranges.
fn scale(lo: f64, hi: f64, from: f64, to: f64) -> impl Fn(f64) -> f64 {
    let span = hi - lo;
    move |v| {
        if span > 0.0 {
            from + (v - lo) / span * (to - from)
        } else {
            (from + to) / 2.0
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn header(out: &mut String, title: &str, provenance: &str, width: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{HEIGHT}" viewBox="0 0 {width} {HEIGHT}">"#
    );
    let _ = writeln!(out, "<!-- {} -->", escape(provenance));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Points colored by label, one legend entry per distinct label.
pub fn scatter(points: &[(f64, f64, String)], title: &str, provenance: &str) -> String {
    let labels: BTreeMap<&str, usize> = points
        .iter()
        .map(|p| p.2.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let mut s = String::new();
    header(&mut s, title, provenance, WIDTH + LEGEND_WIDTH);
    let (x0, x1) = bounds(points.iter().map(|p| p.0));
    let (y0, y1) = bounds(points.iter().map(|p| p.1));
    let sx = scale(x0, x1, MARGIN, WIDTH - MARGIN);
    let sy = scale(y0, y1, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    s.push_str("<g class=\"points\">\n");
    for (x, y, label) in points {
        let color = PALETTE[labels[label.as_str()] % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" fill-opacity="0.8"/>"#,
            sx(*x),
            sy(*y)
        );
    }
    s.push_str("</g>\n<g class=\"legend\">\n");
    for (label, &i) in &labels {
        let y = MARGIN + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend-entry"><circle cx="{:.1}" cy="{y:.1}" r="5" fill="{}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            WIDTH + 10.0,
            PALETTE[i % PALETTE.len()],
            WIDTH + 22.0,
            y + 4.0,
            escape(label)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// `values[i]` plotted at `x = i + 1`, with the maximum marked.
pub fn line_chart(
    values: &[f64],
    title: &str,
    x_label: &str,
    y_label: &str,
    provenance: &str,
) -> String {
    let mut s = String::new();
    header(&mut s, title, provenance, WIDTH);
    let n = values.len();
    let (lo, hi) = bounds(values.iter().copied().chain([0.0, 1.0]));
    let sx = scale(1.0, n.max(2) as f64, MARGIN, WIDTH - MARGIN);
    let sy = scale(lo, hi, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999"/>"##,
        sy(0.0),
        WIDTH - MARGIN,
        sy(0.0)
    );
    for k in 1..=n {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{k}</text>"#,
            sx(k as f64),
            HEIGHT - MARGIN + 16.0
        );
    }
    let path: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", sx((i + 1) as f64), sy(v)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        path.join(" ")
    );
    let best =
        values
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((i, v)),
            });
    if let Some((i, v)) = best {
        let _ = writeln!(
            s,
            r##"<circle class="best" cx="{:.2}" cy="{:.2}" r="5" fill="#d62728"/>"##,
            sx((i + 1) as f64),
            sy(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{v:.3}</text>"#,
            sx((i + 1) as f64) + 8.0,
            sy(v) - 8.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_legend_entry_per_label() {
        let pts: Vec<(f64, f64, String)> = (0..20)
            .map(|i| {
                (
                    i as f64,
                    (i * i) as f64,
                    ["mail", "web", "dns", "workstation"][i % 4].to_string(),
                )
            })
            .collect();
        let svg = scatter(&pts, "roles", "stage=report");
        assert_eq!(svg.matches("class=\"legend-entry\"").count(), 4);
        assert_eq!(svg.matches("<circle").count(), 24);
        assert_eq!(svg, scatter(&pts, "roles", "stage=report"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = scatter(&[(0.0, 0.0, "a<b".into())], "t&t", "p");
        assert!(svg.contains("a&lt;b") && svg.contains("t&amp;t"));
    }

    #[test]
    fn curve_marks_first_maximum() {
        let svg = line_chart(&[0.1, 0.8, 0.8, 0.3], "ARI", "k", "ARI", "p");
        assert_eq!(svg.matches("class=\"best\"").count(), 1);
        assert!(svg.contains(">0.800<"));
    }
}
