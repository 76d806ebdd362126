//! Minimal SVG figures: space-time heatmap, boxplots of repolarisation
//! times and log-log error curves.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::experiments::{boxplot_summary, loglog_slope};
use crate::matrix::Matrix;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Maps `[lo, hi]` onto a pixel interval, padding degenerate ranges.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { lo, hi, p0, p1 }
    }

    fn px(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn frame(s: &mut String, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn ticks(s: &mut String, x: Axis, y: Axis) {
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x.lo + f * (x.hi - x.lo);
        let yv = y.lo + f * (y.hi - y.lo);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x.px(xv),
            HEIGHT - MARGIN + 16.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            y.px(yv) + 4.0,
            tick_label(yv)
        );
    }
}

/// Blue-white-red ramp on `t` in `[0, 1]`.
fn colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (u, u, 1.0)
    } else {
        let u = (t - 0.5) / 0.5;
        (1.0, 1.0 - u, 1.0 - u)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8)
}

/// Space-time heatmap: one row of `values` per time, one column per grid
/// point. Large grids are averaged down to at most 256 columns and rows.
pub fn heatmap_svg(times: &[f64], positions: &[f64], values: &Matrix, title: &str) -> Result<String> {
    if values.rows() != times.len() || values.cols() != positions.len() {
        return Err(Error::LengthMismatch {
            expected: values.rows() * values.cols(),
            found: times.len() * positions.len(),
        });
    }
    if values.rows() == 0 || values.cols() == 0 {
        return Err(Error::InsufficientData("empty heatmap".into()));
    }
    let (vlo, vhi) =
        finite_range(values.as_slice().iter().copied()).ok_or_else(|| Error::NonFinite("heatmap values"))?;
    let nr = values.rows().min(256);
    let nc = values.cols().min(256);
    let x = Axis::new(positions[0], *positions.last().expect("non-empty"), MARGIN, WIDTH - MARGIN);
    let y = Axis::new(times[0], *times.last().expect("non-empty"), MARGIN, HEIGHT - MARGIN);
    let cw = (WIDTH - 2.0 * MARGIN) / nc as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / nr as f64;
    let mut s = header(title);
    for bi in 0..nr {
        let (r0, r1) = (bi * values.rows() / nr, ((bi + 1) * values.rows() / nr).max(bi * values.rows() / nr + 1));
        for bj in 0..nc {
            let (c0, c1) = (bj * values.cols() / nc, ((bj + 1) * values.cols() / nc).max(bj * values.cols() / nc + 1));
            let mut sum = 0.0;
            for r in r0..r1 {
                sum += values.row(r)[c0..c1].iter().sum::<f64>();
            }
            let v = sum / ((r1 - r0) * (c1 - c0)) as f64;
            let t = if vhi > vlo { (v - vlo) / (vhi - vlo) } else { 0.5 };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + bj as f64 * cw,
                MARGIN + bi as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                colour(t)
            );
        }
    }
    frame(&mut s, "x", "t");
    ticks(&mut s, x, y);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">min {} / max {}</text>"#,
        WIDTH - MARGIN,
        MARGIN - 6.0,
        tick_label(vlo),
        tick_label(vhi)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Tukey boxplots, one per labelled group. Empty groups are skipped.
pub fn boxplot_svg(groups: &[(String, Vec<f64>)], title: &str, ylabel: &str) -> Result<String> {
    let stats: Vec<_> = groups.iter().filter_map(|(l, v)| boxplot_summary(v).map(|b| (l, v, b))).collect();
    if stats.is_empty() {
        return Err(Error::InsufficientData("no samples to plot".into()));
    }
    let (lo, hi) = finite_range(stats.iter().flat_map(|(_, v, _)| v.iter().copied()))
        .ok_or_else(|| Error::NonFinite("boxplot samples"))?;
    let pad = 0.05 * (hi - lo).max(1e-12);
    let y = Axis::new(lo - pad, hi + pad, HEIGHT - MARGIN, MARGIN);
    let slot = (WIDTH - 2.0 * MARGIN) / stats.len() as f64;
    let half = 0.3 * slot;
    let mut s = header(title);
    frame(&mut s, "", ylabel);
    for (i, (label, samples, b)) in stats.iter().enumerate() {
        let cx = MARGIN + (i as f64 + 0.5) * slot;
        let line = |s: &mut String, x0: f64, y0: f64, x1: f64, y1: f64| {
            let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="black"/>"#);
        };
        line(&mut s, cx, y.px(b.whisker_low), cx, y.px(b.q1));
        line(&mut s, cx, y.px(b.q3), cx, y.px(b.whisker_high));
        line(&mut s, cx - half / 2.0, y.px(b.whisker_low), cx + half / 2.0, y.px(b.whisker_low));
        line(&mut s, cx - half / 2.0, y.px(b.whisker_high), cx + half / 2.0, y.px(b.whisker_high));
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#cfe2f3" stroke="black"/>"##,
            cx - half,
            y.px(b.q3),
            2.0 * half,
            (y.px(b.q1) - y.px(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y.px(b.median),
            cx + half,
            y.px(b.median)
        );
        for v in samples.iter().filter(|v| **v < b.whisker_low || **v > b.whisker_high) {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2" fill="none" stroke="black"/>"#, y.px(*v));
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(label)
        );
    }
    for i in 0..=4 {
        let v = y.lo + i as f64 / 4.0 * (y.hi - y.lo);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            y.px(v) + 4.0,
            tick_label(v)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Log-log scatter of one or more `(x, y)` series with a least-squares line
/// per series; the legend reports the fitted slope.
pub fn loglog_svg(series: &[(String, Vec<(f64, f64)>)], title: &str, xlabel: &str, ylabel: &str) -> Result<String> {
    let logs: Vec<(&String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(l, pts)| {
            (l, pts.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.log10(), y.log10())).collect())
        })
        .collect();
    let (xlo, xhi) = finite_range(logs.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)))
        .ok_or_else(|| Error::InsufficientData("no positive points to plot".into()))?;
    let (ylo, yhi) = finite_range(logs.iter().flat_map(|(_, p)| p.iter().map(|q| q.1))).expect("same points as x");
    let x = Axis::new(xlo - 0.05, xhi + 0.05, MARGIN, WIDTH - MARGIN);
    let y = Axis::new(ylo - 0.1, yhi + 0.1, HEIGHT - MARGIN, MARGIN);
    let mut s = header(title);
    frame(&mut s, &format!("log10 {xlabel}"), &format!("log10 {ylabel}"));
    ticks(&mut s, x, y);
    for (i, (label, pts)) in logs.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for (lx, ly) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, x.px(*lx), y.px(*ly));
        }
        let mut legend = escape(label);
        if pts.len() >= 2 {
            let xs: Vec<f64> = pts.iter().map(|p| 10f64.powf(p.0)).collect();
            let ys: Vec<f64> = pts.iter().map(|p| 10f64.powf(p.1)).collect();
            let (slope, intercept) = loglog_slope(&xs, &ys)?;
            let (a, b) = (xlo, xhi);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="5,3"/>"#,
                x.px(a),
                y.px(intercept + slope * a),
                x.px(b),
                y.px(intercept + slope * b)
            );
            let _ = write!(legend, " (slope {slope:.2})");
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{c}">{legend}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
