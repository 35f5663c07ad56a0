//! Static SVG figures: metric-versus-sweep line charts and scene views.

use std::fmt::Write as _;

use crate::model::PredictionSet;
use crate::scene::geometry::Point;
use crate::scene::window::{COMM_RADIUS, SENSING_RADIUS};
use crate::scene::SceneRecord;
use crate::train::loss::best_mode_endpoint;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, y, error bar half-height)`.
    pub points: Vec<(f64, f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick step giving roughly five ticks over `span`.
fn tick_step(span: f64) -> f64 {
    let raw = (span / 5.0).max(1e-12);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Line chart with error bars and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 60.0);
    let pts = series.iter().flat_map(|s| &s.points);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y, e) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y - e);
        y1 = y1.max(y + e);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    y1 += 0.05 * (y1 - y0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 19.0,
            label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            left,
            left + pw,
            left - 6.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = ser.points.iter().map(|&(x, y, _)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y, e) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, sx(x), sy(y));
            if e > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{c}"/>"#,
                    sx(x),
                    sy(y - e),
                    sy(y + e)
                );
            }
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Top-down view of a normalized scene: lane centerlines, sensing and
/// communication ranges around the CAV, observed histories, dashed true
/// futures and, if given, the best predicted mode of each scored agent.
pub fn scene_plot(record: &SceneRecord, prediction: Option<&PredictionSet>) -> String {
    let half = COMM_RADIUS + 15.0;
    let px = 6.0;
    let size = 2.0 * half * px;
    let tx = |p: Point| ((p[0] + half) * px, (half - p[1]) * px);
    let poly = |pts: &[Point]| -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = tx(p);
                format!("{x:.1},{y:.1}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(s, r##"<g class="lanes" stroke="#bbb" stroke-width="2">"##);
    for l in &record.lanes {
        let (a, b) = (tx(l.start), tx(l.end));
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/>"#, a.0, a.1, b.0, b.1);
    }
    s.push_str("</g>\n");
    let (cx, cy) = tx([0.0, 0.0]);
    for (class, r, color) in [("sensing-range", SENSING_RADIUS, "#2ca02c"), ("comm-range", COMM_RADIUS, "#1f77b4")] {
        let _ = writeln!(
            s,
            r#"<circle class="{class}" cx="{cx:.1}" cy="{cy:.1}" r="{:.1}" fill="none" stroke="{color}" stroke-dasharray="6 4"/>"#,
            r * px
        );
    }
    for a in &record.agents {
        let hist: Vec<Point> = a.history.iter().flatten().copied().collect();
        let fut: Vec<Point> = a.future.iter().flatten().copied().collect();
        let color = if a.id == record.cav_id {
            "#d62728"
        } else if a.connected {
            "#1f77b4"
        } else {
            "#555"
        };
        if hist.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline class="history" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                poly(&hist)
            );
        }
        if fut.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline class="truth" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="4 3" points="{}"/>"#,
                poly(&fut)
            );
        }
        if let Some(p) = hist.last() {
            let (x, y) = tx(*p);
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 5.0, y - 5.0, a.id);
        }
        if let (Some(pred), true) = (prediction, a.is_scored()) {
            if let Some(i) = pred.index_of(a.id) {
                let modes: Vec<&[Point]> = (0..pred.modes).map(|m| pred.trajectory(i, m)).collect();
                let best = best_mode_endpoint(&modes, &fut);
                let _ = writeln!(
                    s,
                    r#"<polyline class="prediction" fill="none" stroke="{color}" stroke-width="2.5" opacity="0.8" points="{}"/>"#,
                    poly(modes[best])
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::dataset::tests::sample_record;
    use crate::scene::normalize::normalize_scene;

    #[test]
    fn scene_plot_has_one_circle_per_range_at_origin() {
        let rec = normalize_scene(sample_record([30.0, -4.0], 1.1)).unwrap();
        let svg = scene_plot(&rec, None);
        assert_eq!(svg.matches(r#"class="sensing-range""#).count(), 1);
        assert_eq!(svg.matches(r#"class="comm-range""#).count(), 1);
        let center = format!(r#"cx="{0:.1}" cy="{0:.1}""#, (COMM_RADIUS + 15.0) * 6.0);
        let ranges: Vec<&str> = svg.lines().filter(|l| l.contains("-range")).collect();
        assert!(ranges.len() == 2 && ranges.iter().all(|l| l.contains(&center)));
        assert!(svg.contains(&format!(r#"r="{:.1}""#, SENSING_RADIUS * 6.0)));
        assert!(svg.contains(&format!(r#"r="{:.1}""#, COMM_RADIUS * 6.0)));
    }

    #[test]
    fn chart_labels_axes() {
        let s = Series {
            name: "fusion".into(),
            points: vec![(0.0, 1.0, 0.1), (0.5, 1.4, 0.2)],
        };
        let svg = line_chart("Noise", "noise variance (m²)", "ADE (m)", &[s]);
        assert!(svg.contains("noise variance (m²)"));
        assert!(svg.contains("ADE (m)"));
        assert_eq!(svg.matches(r#"class="series""#).count(), 1);
    }

    #[test]
    fn ticks_are_round() {
        let close = |a: Vec<f64>, b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
        assert!(close(ticks(0.0, 1.0), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]));
        assert!(close(ticks(1.0, 15.0), &[5.0, 10.0, 15.0]));
    }
}
