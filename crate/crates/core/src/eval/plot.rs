//! Dependency-free SVG renderings of matrices and sweeps.

use std::fmt::Write;

use super::{AblationReport, SimilarityMatrix};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Off-diagonal values mapped to a white-to-blue ramp; the diagonal is grey.
pub fn heatmap_svg(m: &SimilarityMatrix) -> String {
    const CELL: usize = 36;
    const MARGIN: usize = 110;
    let n = m.len();
    let size = MARGIN + n * CELL + 20;
    let (lo, hi) = m
        .pairs()
        .flat_map(|(i, j)| [m.get(i, j), m.get(j, i)])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="11">"#
    );
    for (i, l) in m.labels.iter().enumerate() {
        let c = MARGIN + i * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{}" y="{c}" text-anchor="end" dominant-baseline="middle">{}</text>"#, MARGIN - 6, escape(l));
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="{}" text-anchor="start" transform="rotate(-60 {c} {})">{}</text>"#,
            MARGIN - 6,
            MARGIN - 6,
            escape(l)
        );
    }
    for i in 0..n {
        for j in 0..n {
            let fill = if i == j {
                "#bbbbbb".to_string()
            } else {
                let u = ((m.get(i, j) - lo) / span).clamp(0.0, 1.0);
                let r = (255.0 * (1.0 - u)) as u8;
                let g = (255.0 * (1.0 - 0.7 * u)) as u8;
                format!("#{r:02x}{g:02x}ff")
            };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"><title>{} / {}: {}</title></rect>"#,
                MARGIN + j * CELL,
                MARGIN + i * CELL,
                escape(&m.labels[i]),
                escape(&m.labels[j]),
                m.get(i, j)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Alignment score per swept value as a polyline.
pub fn line_plot_svg(r: &AblationReport) -> String {
    const W: f64 = 420.0;
    const H: f64 = 260.0;
    const PAD: f64 = 48.0;
    let n = r.scores.len();
    let lo = r.scores.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = r.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(100.0);
    let x = |i: usize| PAD + (W - 2.0 * PAD) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r##"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="#444"/>"##,
        H - PAD,
        W - PAD
    );
    for v in [lo, hi] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.0}</text>"#, PAD - 6.0, y(v));
    }
    let points: Vec<String> = r.scores.iter().enumerate().map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="2"/>"##, points.join(" "));
    for (i, (label, v)) in r.values.iter().zip(&r.scores).enumerate() {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f5fbf"><title>{v}</title></circle>"##, x(i), y(*v));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x(i), H - PAD + 16.0, escape(label));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 8.0,
        escape(&r.parameter)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorConfig, Method};

    #[test]
    fn heatmap_has_one_cell_per_entry() {
        let m = SimilarityMatrix {
            labels: vec!["a<b".into(), "c".into()],
            values: vec![vec![0.0, 2.0], vec![2.0, 0.0]],
            method: Method::Conjure,
            steps: 10,
            config: EstimatorConfig::default(),
        };
        let svg = heatmap_svg(&m);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn line_plot_marks_every_value() {
        let r = AblationReport {
            parameter: "k".into(),
            values: vec!["1".into(), "2".into(), "3".into()],
            method: Method::Conjure,
            base_steps: 10,
            base: EstimatorConfig::default(),
            scores: vec![80.0, 85.0, 84.0],
            distances: vec![],
            runtimes_secs: vec![],
        };
        let svg = line_plot_svg(&r);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("<polyline"));
    }
}
