//! Static SVG figures and their underlying CSV tables: sigma-vs-error
//! scatter, grouped box plots, and cumulative-variance curves.
//!
//! Every emitter is a pure string builder, so figures are byte-stable
//! for fixed inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::percentile;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 58.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxStats {
    pub label: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary with linear-interpolation quartiles, the same
/// convention the calibration flags use.
pub fn box_stats(label: &str, values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::invalid(format!("box stats for '{label}' need values")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("box stats for '{label}' got a non-finite value")));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(BoxStats {
        label: label.to_string(),
        count: values.len(),
        min,
        q1: percentile(values, 0.25),
        median: percentile(values, 0.50),
        q3: percentile(values, 0.75),
        max,
    })
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Axis range padded away from the data so points never sit on the frame.
fn padded(min: f64, max: f64) -> (f64, f64) {
    if min == max {
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
        (min - pad, max + pad)
    } else {
        let pad = (max - min) * 0.05;
        (min - pad, max + pad)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B - (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    );
}

fn svg_frame_and_axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    let _ = write!(
        out,
        "<rect x=\"{x0}\" y=\"{y1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        x1 - x0,
        y0 - y1
    );
    if x_ticks {
        for t in ticks(f.x_lo, f.x_hi) {
            let px = f.x(t);
            let _ = write!(
                out,
                "<line x1=\"{px:.1}\" y1=\"{y0}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
                 <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                y0 + 5.0,
                y0 + 18.0,
                fmt(t)
            );
        }
    }
    for t in ticks(f.y_lo, f.y_hi) {
        let py = f.y(t);
        let _ = write!(
            out,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0}\" y2=\"{py:.1}\" stroke=\"black\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fmt(t)
        );
    }
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        esc(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

fn validate_pairs(points: &[(f64, f64)]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid("scatter needs at least one point"));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("scatter got a non-finite point"));
    }
    Ok(())
}

pub fn scatter_svg(
    points: &[(f64, f64)],
    x_label: &str,
    y_label: &str,
    title: &str,
) -> Result<String> {
    validate_pairs(points)?;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let (x_lo, x_hi) = padded(x_min, x_max);
    let (y_lo, y_hi) = padded(y_min, y_max);
    let f = Frame { x_lo, x_hi, y_lo, y_hi };

    let mut out = String::new();
    svg_open(&mut out, title);
    svg_frame_and_axes(&mut out, &f, x_label, y_label, true);
    for &(x, y) in points {
        let _ = write!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n",
            f.x(x),
            f.y(y)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn scatter_csv(points: &[(f64, f64)], x_label: &str, y_label: &str) -> Result<String> {
    validate_pairs(points)?;
    let mut out = format!("{},{}\n", csv_field(x_label), csv_field(y_label));
    for (x, y) in points {
        let _ = writeln!(out, "{x},{y}");
    }
    Ok(out)
}

fn validate_curve(shares: &[f64]) -> Result<()> {
    if shares.is_empty() {
        return Err(Error::invalid("variance curve needs at least one mode"));
    }
    if shares.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("variance curve got a non-finite share"));
    }
    Ok(())
}

/// Cumulative-variance curve: x is the mode count, y the cumulative share.
pub fn variance_curve_svg(shares: &[f64], title: &str) -> Result<String> {
    validate_curve(shares)?;
    let f = Frame {
        x_lo: 0.0,
        x_hi: shares.len() as f64,
        y_lo: 0.0,
        y_hi: 1.05,
    };
    let mut out = String::new();
    svg_open(&mut out, title);
    svg_frame_and_axes(&mut out, &f, "modes", "cumulative variance share", false);
    // Integer mode ticks, thinned when there are many modes.
    let step = (shares.len() / 8).max(1);
    let y0 = HEIGHT - MARGIN_B;
    for k in (step..=shares.len()).step_by(step) {
        let px = f.x(k as f64);
        let _ = write!(
            out,
            "<line x1=\"{px:.1}\" y1=\"{y0}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
             <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{k}</text>\n",
            y0 + 5.0,
            y0 + 18.0
        );
    }
    let mut path = String::new();
    for (i, &s) in shares.iter().enumerate() {
        let _ = write!(path, "{}{:.2},{:.2} ", if i == 0 { "" } else { " " }, f.x((i + 1) as f64), f.y(s));
    }
    let _ = write!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
        path.trim_end()
    );
    for (i, &s) in shares.iter().enumerate() {
        let _ = write!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>\n",
            f.x((i + 1) as f64),
            f.y(s)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn variance_curve_csv(shares: &[f64]) -> Result<String> {
    validate_curve(shares)?;
    let mut out = String::from("mode,cumulative_variance\n");
    for (i, s) in shares.iter().enumerate() {
        let _ = writeln!(out, "{},{s}", i + 1);
    }
    Ok(out)
}

pub fn box_plot_svg(stats: &[BoxStats], y_label: &str, title: &str) -> Result<String> {
    if stats.is_empty() {
        return Err(Error::invalid("box plot needs at least one group"));
    }
    let y_min = stats.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
    let y_max = stats.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = padded(y_min, y_max);
    let f = Frame { x_lo: 0.0, x_hi: stats.len() as f64, y_lo, y_hi };

    let mut out = String::new();
    svg_open(&mut out, title);
    svg_frame_and_axes(&mut out, &f, "", y_label, false);
    let slot = (WIDTH - MARGIN_L - MARGIN_R) / stats.len() as f64;
    let half = (slot * 0.3).min(40.0);
    for (i, s) in stats.iter().enumerate() {
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let (y_min_px, y_max_px) = (f.y(s.min), f.y(s.max));
        let (y_q1, y_q3, y_med) = (f.y(s.q1), f.y(s.q3), f.y(s.median));
        let _ = write!(
            out,
            "<g stroke=\"black\" fill=\"none\">\n\
             <line x1=\"{cx:.1}\" y1=\"{y_min_px:.2}\" x2=\"{cx:.1}\" y2=\"{y_q1:.2}\"/>\n\
             <line x1=\"{cx:.1}\" y1=\"{y_q3:.2}\" x2=\"{cx:.1}\" y2=\"{y_max_px:.2}\"/>\n\
             <line x1=\"{:.1}\" y1=\"{y_min_px:.2}\" x2=\"{:.1}\" y2=\"{y_min_px:.2}\"/>\n\
             <line x1=\"{:.1}\" y1=\"{y_max_px:.2}\" x2=\"{:.1}\" y2=\"{y_max_px:.2}\"/>\n\
             <rect x=\"{:.1}\" y=\"{y_q3:.2}\" width=\"{:.1}\" height=\"{:.2}\" fill=\"lightsteelblue\"/>\n\
             <line x1=\"{:.1}\" y1=\"{y_med:.2}\" x2=\"{:.1}\" y2=\"{y_med:.2}\" stroke-width=\"2\"/>\n\
             </g>\n\
             <text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            cx - half * 0.5,
            cx + half * 0.5,
            cx - half * 0.5,
            cx + half * 0.5,
            cx - half,
            half * 2.0,
            y_q1 - y_q3,
            cx - half,
            cx + half,
            HEIGHT - MARGIN_B + 18.0,
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn box_plot_csv(stats: &[BoxStats]) -> Result<String> {
    if stats.is_empty() {
        return Err(Error::invalid("box plot needs at least one group"));
    }
    let mut out = String::from("label,count,min,q1,median,q3,max\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&s.label),
            s.count,
            s.min,
            s.q1,
            s.median,
            s.q3,
            s.max
        );
    }
    Ok(out)
}

/// Writes `<stem>.svg` and `<stem>.csv` under `dir`, creating it if needed.
pub fn write_figure(dir: &Path, stem: &str, svg: &str, csv: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let svg_path = dir.join(format!("{stem}.svg"));
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&svg_path, svg)?;
    fs::write(&csv_path, csv)?;
    Ok((svg_path, csv_path))
}
