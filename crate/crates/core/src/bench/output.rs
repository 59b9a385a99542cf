//! CSV and SVG emission for experiment records.
//!
//! CSV layout:
//!
//! ```text
//! # seed=<seed> config_hash=<hex> stream=<hex>
//! curve,trajectories,transitions,macs,wall_seconds,rmse
//! td,0,0,0,0.0000000000000000e0,1.1606032913613069e2
//! ```
//!
//! Floats carry 17 significant digits so a parse reproduces them exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bench::experiment::RunRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "curve,trajectories,transitions,macs,wall_seconds,rmse";

/// Provenance line written above the CSV header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvMeta {
    pub seed: u64,
    pub config_hash: String,
    pub stream_checksum: String,
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_string(records: &[RunRecord], meta: &CsvMeta) -> String {
    let mut out = format!(
        "# seed={} config_hash={} stream={}\n{CSV_HEADER}\n",
        meta.seed, meta.config_hash, meta.stream_checksum
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.curve,
            r.trajectories,
            r.transitions,
            r.macs,
            float(r.wall_seconds),
            float(r.rmse)
        );
    }
    out
}

pub fn emit_csv(records: &[RunRecord], meta: &CsvMeta, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidConfig(format!("no records to write to {}", path.display())));
    }
    fs::write(path, csv_string(records, meta)).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(path: &Path) -> Result<(CsvMeta, Vec<RunRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_str(&text).map_err(|(line, message)| Error::Parse { path: path.into(), line, message })
}

pub fn parse_csv_str(text: &str) -> std::result::Result<(CsvMeta, Vec<RunRecord>), (usize, String)> {
    let mut lines = text.lines();
    let comment = lines.next().ok_or((1, "empty file".to_owned()))?;
    let fields = comment.strip_prefix("# ").ok_or((1, "missing provenance comment".to_owned()))?;
    let mut meta = CsvMeta { seed: 0, config_hash: String::new(), stream_checksum: String::new() };
    let mut seen_seed = false;
    for kv in fields.split_whitespace() {
        let (key, value) = kv.split_once('=').ok_or((1, format!("malformed `{kv}`")))?;
        match key {
            "seed" => {
                meta.seed = value.parse().map_err(|_| (1, format!("bad seed `{value}`")))?;
                seen_seed = true;
            }
            "config_hash" => meta.config_hash = value.to_owned(),
            "stream" => meta.stream_checksum = value.to_owned(),
            _ => return Err((1, format!("unknown key `{key}`"))),
        }
    }
    if !seen_seed {
        return Err((1, "missing seed".to_owned()));
    }
    if lines.next() != Some(CSV_HEADER) {
        return Err((2, "unexpected header".to_owned()));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err((lineno, format!("expected 6 columns, found {}", cols.len())));
        }
        let bad = |name: &str| (lineno, format!("bad {name} `{line}`"));
        records.push(RunRecord {
            curve: cols[0].to_owned(),
            trajectories: cols[1].parse().map_err(|_| bad("trajectories"))?,
            transitions: cols[2].parse().map_err(|_| bad("transitions"))?,
            macs: cols[3].parse().map_err(|_| bad("macs"))?,
            wall_seconds: cols[4].parse().map_err(|_| bad("wall_seconds"))?,
            rmse: cols[5].parse().map_err(|_| bad("rmse"))?,
        });
    }
    Ok((meta, records))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XAxis {
    Trajectories,
    Macs,
    WallSeconds,
}

impl XAxis {
    pub const ALL: [XAxis; 3] = [XAxis::Trajectories, XAxis::Macs, XAxis::WallSeconds];

    pub fn name(self) -> &'static str {
        match self {
            XAxis::Trajectories => "trajectories",
            XAxis::Macs => "macs",
            XAxis::WallSeconds => "wall_seconds",
        }
    }

    fn value(self, r: &RunRecord) -> f64 {
        match self {
            XAxis::Trajectories => r.trajectories as f64,
            XAxis::Macs => r.macs as f64,
            XAxis::WallSeconds => r.wall_seconds,
        }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Renders RMSE against `axis` on a log-scale y axis, one polyline per curve.
/// Non-positive RMSE values are clamped to the smallest positive one;
/// non-finite points are skipped.
pub fn svg_string(records: &[RunRecord], axis: XAxis) -> String {
    let mut curves: Vec<(&str, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        match curves.iter_mut().find(|(l, _)| *l == r.curve) {
            Some((_, pts)) => pts.push(r),
            None => curves.push((&r.curve, vec![r])),
        }
    }
    let finite: Vec<&RunRecord> = records.iter().filter(|r| r.rmse.is_finite() && axis.value(r).is_finite()).collect();
    let floor = finite.iter().map(|r| r.rmse).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let y_of = |rmse: f64| rmse.max(floor).log10();

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &finite {
        x_min = x_min.min(axis.value(r));
        x_max = x_max.max(axis.value(r));
        y_min = y_min.min(y_of(r.rmse));
        y_max = y_max.max(y_of(r.rmse));
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    let y_lo = y_min.floor();
    let y_hi = if y_max.ceil() > y_lo { y_max.ceil() } else { y_lo + 1.0 };
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / x_span * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">RMSE vs {}</text>"#,
        LEFT + plot_w / 2.0,
        axis.name()
    );
    let _ =
        writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);
    let mut decade = y_lo as i32;
    while decade as f64 <= y_hi {
        let y = py(decade as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{decade}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
        decade += 1;
    }
    for k in 0..=4 {
        let x = x_min + x_span * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            TOP + plot_h + 18.0,
            tick_label(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        axis.name()
    );

    for (idx, (label, points)) in curves.iter().enumerate() {
        let colour = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .filter(|r| r.rmse.is_finite() && axis.value(r).is_finite())
            .map(|r| format!("{:.2},{:.2}", px(axis.value(r)), py(y_of(r.rmse))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * idx as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e5 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_svg(records: &[RunRecord], axis: XAxis, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidConfig(format!("no records to plot to {}", path.display())));
    }
    fs::write(path, svg_string(records, axis)).map_err(|e| Error::io(path, e))
}
