//! Minimal SVG line plots for ROC curves.

use std::fmt::Write;

use crate::metrics::RocCurve;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Axes, chance diagonal and one polyline per labelled curve.
pub fn roc_svg(title: &str, curves: &[(String, RocCurve)]) -> String {
    let w = SIZE + 2.0 * MARGIN;
    let px = |fpr: f64| MARGIN + fpr * SIZE;
    let py = |tpr: f64| MARGIN + (1.0 - tpr) * SIZE;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{w}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        MARGIN / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            MARGIN + SIZE + 14.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 4.0,
            py(v) + 3.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">false positive rate</text>"#,
        w / 2.0,
        MARGIN + SIZE + 32.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">true positive rate</text>"#,
        w / 2.0,
        w / 2.0
    )
    .unwrap();
    writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    )
    .unwrap();
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = MARGIN + SIZE - 12.0 - 16.0 * (curves.len() - 1 - i) as f64;
        writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}" text-anchor="end">{}</text>"#,
            MARGIN + SIZE - 8.0,
            escape(label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label::{Fake, Real};
    use crate::metrics::roc_curve;

    #[test]
    fn svg_contains_one_polyline_per_curve() {
        let c = roc_curve(&[0.9, 0.8, 0.4, 0.3], &[Fake, Real, Fake, Real]).unwrap();
        let svg = roc_svg("a < b", &[("x".into(), c.clone()), ("y & z".into(), c)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b") && svg.contains("y &amp; z"));
        // (0,0) maps to the bottom-left corner of the plot area
        assert!(svg.contains("50.00,450.00"));
    }
}
