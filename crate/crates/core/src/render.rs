//! SVG figures: percentile-binned pitch scatter of valued defensive actions
//! and a score-versus-market-value scatter with its least-squares line.
//!
//! Output bytes depend only on the inputs: coordinates are printed with four
//! decimals and nothing time- or environment-dependent is emitted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::events::{PITCH_LENGTH, PITCH_WIDTH};
use crate::stats::pearson;

pub const CANVAS_WIDTH: f64 = 1050.0;
pub const CANVAS_HEIGHT: f64 = 680.0;
const UNITS_PER_METER: f64 = CANVAS_WIDTH / PITCH_LENGTH;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("empty population")]
    EmptyPopulation,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("need at least {needed} points, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bin {
    Blue,
    Green,
    Yellow,
    Red,
}

impl Bin {
    pub const ALL: [Bin; 4] = [Bin::Blue, Bin::Green, Bin::Yellow, Bin::Red];

    pub fn color(self) -> &'static str {
        match self {
            Bin::Blue => "blue",
            Bin::Green => "green",
            Bin::Yellow => "yellow",
            Bin::Red => "red",
        }
    }
}

/// Top-10% / top-30% / top-50% cutoffs fitted on a population.
///
/// The cutoff for fraction `q` is the `ceil(q·N)`-th largest value
/// (nearest rank). A value lands in the first bin whose cutoff it reaches,
/// so ties go to the higher bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPalette {
    pub fractions: [f64; 3],
    pub cutoffs: [f64; 3],
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.1, 0.3, 0.5];

impl BinPalette {
    pub fn fit(population: &[f64]) -> Result<Self, RenderError> {
        Self::with_fractions(population, DEFAULT_FRACTIONS)
    }

    pub fn with_fractions(population: &[f64], fractions: [f64; 3]) -> Result<Self, RenderError> {
        if population.is_empty() {
            return Err(RenderError::EmptyPopulation);
        }
        if population.iter().any(|v| !v.is_finite()) {
            return Err(RenderError::NonFinite);
        }
        if !(fractions[0] > 0.0 && fractions[0] < fractions[1] && fractions[1] < fractions[2] && fractions[2] <= 1.0) {
            return Err(RenderError::Degenerate("fractions must increase within (0, 1]"));
        }
        let mut desc = population.to_vec();
        desc.sort_by(|a, b| b.total_cmp(a));
        let n = desc.len() as f64;
        let cutoffs = fractions.map(|q| {
            let k = ((q * n).ceil() as usize).clamp(1, desc.len());
            desc[k - 1]
        });
        Ok(Self { fractions, cutoffs })
    }

    pub fn assign(&self, v: f64) -> Bin {
        Bin::ALL[..3]
            .iter()
            .zip(&self.cutoffs)
            .find(|(_, c)| v >= **c)
            .map_or(Bin::Red, |(b, _)| *b)
    }
}

pub fn assign_bins(population: &[f64], subject: &[f64]) -> Result<Vec<Bin>, RenderError> {
    let palette = BinPalette::fit(population)?;
    Ok(subject.iter().map(|v| palette.assign(*v)).collect())
}

/// Fixed four-decimal formatting without a negative zero.
fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// Pitch metres to canvas units; attack runs left to right and y points up.
pub fn pitch_to_canvas(x: f64, y: f64) -> (f64, f64) {
    (x * UNITS_PER_METER, (PITCH_WIDTH - y) * UNITS_PER_METER)
}

fn svg_open(out: &mut String, title: &str) {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = CANVAS_WIDTH,
        h = CANVAS_HEIGHT
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(title)).unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn rect_m(out: &mut String, x0: f64, y0: f64, x1: f64, y1: f64) {
    let (ax, ay) = pitch_to_canvas(x0, y1);
    let (bx, by) = pitch_to_canvas(x1, y0);
    writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
        num(ax),
        num(ay),
        num(bx - ax),
        num(by - ay)
    )
    .unwrap();
}

fn pitch_markings(out: &mut String) {
    const BOX_DEPTH: f64 = 16.5;
    const BOX_WIDTH: f64 = 40.32;
    const SIX_DEPTH: f64 = 5.5;
    const SIX_WIDTH: f64 = 18.32;
    const CIRCLE_R: f64 = 9.15;
    let mid_y = PITCH_WIDTH / 2.0;
    writeln!(out, r#"<g id="pitch" fill="none" stroke="black" stroke-width="2">"#).unwrap();
    rect_m(out, 0.0, 0.0, PITCH_LENGTH, PITCH_WIDTH);
    let (hx, top) = pitch_to_canvas(PITCH_LENGTH / 2.0, PITCH_WIDTH);
    let (_, bottom) = pitch_to_canvas(PITCH_LENGTH / 2.0, 0.0);
    writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#, num(hx), num(top), num(bottom)).unwrap();
    let (cx, cy) = pitch_to_canvas(PITCH_LENGTH / 2.0, mid_y);
    writeln!(out, r#"<circle cx="{}" cy="{}" r="{}"/>"#, num(cx), num(cy), num(CIRCLE_R * UNITS_PER_METER)).unwrap();
    for (depth, width) in [(BOX_DEPTH, BOX_WIDTH), (SIX_DEPTH, SIX_WIDTH)] {
        rect_m(out, 0.0, mid_y - width / 2.0, depth, mid_y + width / 2.0);
        rect_m(out, PITCH_LENGTH - depth, mid_y - width / 2.0, PITCH_LENGTH, mid_y + width / 2.0);
    }
    writeln!(out, "</g>").unwrap();
}

/// A marker to draw on the pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchMarker {
    pub x: f64,
    pub y: f64,
    pub bin: Bin,
}

pub fn pitch_scatter_svg(markers: &[PitchMarker], title: &str) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        CANVAS_WIDTH, CANVAS_HEIGHT
    )
    .unwrap();
    pitch_markings(&mut out);
    writeln!(out, r#"<g id="actions" stroke="black" stroke-width="0.5">"#).unwrap();
    for m in markers {
        let (cx, cy) = pitch_to_canvas(m.x, m.y);
        writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="6.0000" fill="{}"/>"#,
            num(cx),
            num(cy),
            m.bin.color()
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();
    out.push_str("</svg>\n");
    out
}

/// Ordinary least squares `y = b0 + b1 x`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64), RenderError> {
    if x.len() != y.len() {
        return Err(RenderError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(RenderError::TooFew { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RenderError::Degenerate("constant x"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b1 = sxy / sxx;
    Ok((my - b1 * mx, b1))
}

pub fn scatter_regression_svg(x: &[f64], y: &[f64], title: &str) -> Result<String, RenderError> {
    let (b0, b1) = ols_fit(x, y)?;
    const MARGIN: f64 = 70.0;
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
        (lo - pad, hi + pad)
    };
    let (x0, x1) = span(x);
    let (y0, y1) = span(y);
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (CANVAS_WIDTH - 2.0 * MARGIN);
    let py = |v: f64| CANVAS_HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (CANVAS_HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    svg_open(&mut out, title);
    writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        CANVAS_WIDTH, CANVAS_HEIGHT
    )
    .unwrap();
    let (left, right) = (MARGIN, CANVAS_WIDTH - MARGIN);
    let (top, bottom) = (MARGIN, CANVAS_HEIGHT - MARGIN);
    writeln!(out, r#"<g id="axes" stroke="black" stroke-width="1.5">"#).unwrap();
    writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/>"#, num(left), num(bottom), num(right)).unwrap();
    writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#, num(left), num(bottom), num(top)).unwrap();
    writeln!(out, "</g>").unwrap();
    writeln!(out, r#"<g id="labels" font-family="sans-serif" font-size="16">"#).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">defender score</text>"#, num(CANVAS_WIDTH / 2.0), num(CANVAS_HEIGHT - 25.0)).unwrap();
    writeln!(out, r#"<text x="20.0000" y="{0}" transform="rotate(-90 20.0000 {0})" text-anchor="middle">market value (millions)</text>"#, num(CANVAS_HEIGHT / 2.0)).unwrap();
    for (v, anchor, (tx, ty)) in [
        (x0, "start", (left, bottom + 20.0)),
        (x1, "end", (right, bottom + 20.0)),
    ] {
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, num(tx), num(ty), num(v)).unwrap();
    }
    for (v, ty) in [(y0, bottom), (y1, top + 12.0)] {
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, num(left - 6.0), num(ty), num(v)).unwrap();
    }
    let r_text = match pearson(x, y) {
        Ok(r) => format!("r = {}, p = {:.4e}", num(r.statistic), r.p_value),
        Err(_) => "r undefined".to_owned(),
    };
    writeln!(
        out,
        r#"<text x="{}" y="{}">{}; y = {} + {} x</text>"#,
        num(left + 10.0),
        num(top - 20.0),
        r_text,
        num(b0),
        num(b1)
    )
    .unwrap();
    writeln!(out, "</g>").unwrap();
    writeln!(out, r#"<g id="points" fill="steelblue" stroke="black" stroke-width="0.5">"#).unwrap();
    for (a, b) in x.iter().zip(y) {
        writeln!(out, r#"<circle cx="{}" cy="{}" r="5.0000"/>"#, num(px(*a)), num(py(*b))).unwrap();
    }
    writeln!(out, "</g>").unwrap();
    let (lx0, lx1) = (x.iter().copied().fold(f64::INFINITY, f64::min), x.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    writeln!(
        out,
        r#"<line id="fit" x1="{}" y1="{}" x2="{}" y2="{}" stroke="red" stroke-width="2"/>"#,
        num(px(lx0)),
        num(py(b0 + b1 * lx0)),
        num(px(lx1)),
        num(py(b0 + b1 * lx1))
    )
    .unwrap();
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<(), RenderError> {
    fs::write(path, svg).map_err(|source| RenderError::Io {
        path: path.to_path_buf(),
        source,
    })
}
