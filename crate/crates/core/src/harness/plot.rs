//! Minimal SVG line plots of sweep results, one chart per metric.

use std::fmt::Write as _;

use super::sweep::{SweepResult, SweepRow};
use super::Scheme;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Metrics that can be plotted, with their CSV-style names.
pub const METRICS: [(&str, fn(&SweepRow) -> f64); 4] = [
    ("psnr", |r| r.corrected.psnr_db.mean),
    ("ssim", |r| r.corrected.ssim.mean),
    ("ms_ssim", |r| r.corrected.ms_ssim.mean),
    ("mse", |r| r.corrected.mse.mean),
];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// One SVG document: the metric of every scheme against SNR.
pub fn render(result: &SweepResult, name: &str, metric: fn(&SweepRow) -> f64) -> String {
    let (x0, x1) = range(result.rows.iter().map(|r| r.snr_db));
    let (y0, y1) = range(result.rows.iter().map(metric));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        w,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )
    .unwrap();
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">SNR (dB)</text>"#, WIDTH / 2.0, HEIGHT - 16.0).unwrap();
    writeln!(w, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{name}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0).unwrap();
    for (label, v) in [(x0, x0), (x1, x1)] {
        writeln!(w, r#"<text x="{:.1}" y="{}" text-anchor="middle">{label}</text>"#, px(v), HEIGHT - MARGIN + 16.0).unwrap();
    }
    for v in [y0, y1] {
        writeln!(w, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.4}</text>"#, MARGIN - 4.0, py(v) + 4.0, v).unwrap();
    }
    let schemes: Vec<Scheme> = {
        let mut s: Vec<Scheme> = Vec::new();
        for r in &result.rows {
            if !s.contains(&r.scheme) {
                s.push(r.scheme);
            }
        }
        s
    };
    for (k, scheme) in schemes.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = result
            .rows
            .iter()
            .filter(|r| r.scheme == *scheme && metric(r).is_finite())
            .map(|r| format!("{:.1},{:.1}", px(r.snr_db), py(metric(r))))
            .collect();
        writeln!(w, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, points.join(" ")).unwrap();
        let ly = MARGIN + 16.0 * k as f64;
        writeln!(w, r#"<text x="{}" y="{ly}" fill="{color}">{scheme}</text>"#, WIDTH - MARGIN - 150.0).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    svg
}
