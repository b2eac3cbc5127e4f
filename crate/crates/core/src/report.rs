//! Rate tables: CSV serialization and SVG bar charts of benchmark sweeps.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::pipeline::{BenchReport, Mode};

pub const CSV_HEADER: &str = "mode,instances,aggregate_pps,per_instance_pps,stddev_pps";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot chart an empty rate table")]
    EmptyTable,
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub mode: Mode,
    pub instances: usize,
    pub aggregate_rate: f64,
    pub per_instance_rate: f64,
    /// Standard deviation of the aggregate rate over batches.
    pub stddev: f64,
}

impl RateRow {
    pub fn new(mode: Mode, instances: usize, aggregate_rate: f64, stddev: f64) -> Self {
        Self { mode, instances, aggregate_rate, per_instance_rate: aggregate_rate / instances as f64, stddev }
    }

    pub fn from_report(report: &BenchReport) -> Self {
        Self::new(report.mode, report.config.instances, report.aggregate_rate, report.batch_stddev())
    }
}

/// Rows kept sorted by `(mode, instances)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateTable {
    rows: Vec<RateRow>,
}

impl RateTable {
    pub fn new(rows: Vec<RateRow>) -> Self {
        let mut t = Self { rows };
        t.sort();
        t
    }

    pub fn push(&mut self, row: RateRow) {
        self.rows.push(row);
        self.sort();
    }

    fn sort(&mut self) {
        self.rows.sort_by_key(|r| (r.mode, r.instances));
    }

    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn modes(&self) -> Vec<Mode> {
        let mut m: Vec<Mode> = self.rows.iter().map(|r| r.mode).collect();
        m.dedup();
        m
    }
}

pub fn write_rate_csv<W: Write>(table: &RateTable, mut sink: W) -> io::Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in table.rows() {
        writeln!(
            sink,
            "{},{},{},{},{}",
            r.mode, r.instances, r.aggregate_rate, r.per_instance_rate, r.stddev
        )?;
    }
    sink.flush()
}

pub fn read_rate_csv<R: BufRead>(source: R) -> Result<RateTable, ReportError> {
    let mut rows = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let err = |reason: String| ReportError::Csv { line: idx + 1, reason };
        if idx == 0 {
            if line != CSV_HEADER {
                return Err(err(format!("expected header {CSV_HEADER:?}")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
        rows.push(RateRow {
            mode: f[0].parse().map_err(err)?,
            instances: f[1].parse().map_err(|e| err(format!("{:?}: {e}", f[1])))?,
            aggregate_rate: num(f[2])?,
            per_instance_rate: num(f[3])?,
            stddev: num(f[4])?,
        });
    }
    Ok(RateTable::new(rows))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn series_style(mode: Mode) -> (&'static str, &'static str) {
    match mode {
        Mode::BuildOnly => ("#1f77b4", "build only"),
        Mode::BuildIo => ("#ff7f0e", "build + IO"),
    }
}

// Smallest 1/2/5 x 10^k at or above `v`.
fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&c| c >= v).unwrap()
}

fn rate_label(pps: f64) -> String {
    if pps >= 1e6 {
        format!("{:.1}M", pps / 1e6)
    } else if pps >= 1e3 {
        format!("{:.0}k", pps / 1e3)
    } else {
        format!("{pps:.0}")
    }
}

/// Grouped bar chart: instance counts along x, packets/second along y, one
/// colored series per mode with error whiskers of one stddev.
pub fn emit_chart<W: Write>(table: &RateTable, mut sink: W) -> Result<(), ReportError> {
    if table.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    let modes = table.modes();
    let mut groups: Vec<usize> = table.rows().iter().map(|r| r.instances).collect();
    groups.sort_unstable();
    groups.dedup();
    let ymax = nice_ceiling(table.rows().iter().map(|r| r.aggregate_rate + r.stddev).fold(0.0, f64::max));

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let group_w = plot_w / groups.len() as f64;
    let bar_w = group_w * 0.8 / modes.len() as f64;
    let y_of = |v: f64| TOP + plot_h * (1.0 - v / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">Average traffic matrix construction rates</text>"#,
        WIDTH / 2.0
    );

    for i in 0..=5 {
        let v = ymax * i as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            rate_label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">packets / second</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (g, &instances) in groups.iter().enumerate() {
        let gx = LEFT + group_w * g as f64;
        for (m, &mode) in modes.iter().enumerate() {
            let Some(row) = table.rows().iter().find(|r| r.mode == mode && r.instances == instances) else {
                continue;
            };
            let (color, _) = series_style(mode);
            let x = gx + group_w * 0.1 + bar_w * m as f64;
            let y = y_of(row.aggregate_rate);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{bar_w:.1}" height="{:.1}" fill="{color}"><title>{} x{}: {:.0} pps</title></rect>"#,
                TOP + plot_h - y,
                mode,
                instances,
                row.aggregate_rate
            );
            if row.stddev > 0.0 {
                let cx = x + bar_w / 2.0;
                let _ = writeln!(
                    s,
                    r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#333333"/>"##,
                    y_of(row.aggregate_rate + row.stddev),
                    y_of((row.aggregate_rate - row.stddev).max(0.0))
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{instances}</text>"#,
            gx + group_w / 2.0,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#000000"/>"##,
        TOP + plot_h,
        WIDTH - RIGHT,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">instances</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );

    for (m, &mode) in modes.iter().enumerate() {
        let (color, label) = series_style(mode);
        let lx = WIDTH - RIGHT - 130.0;
        let ly = TOP + 8.0 + 18.0 * m as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{ly:.1}" dy="4">{label}</text></g>"#,
            ly - 6.0,
            lx + 18.0
        );
    }
    s.push_str("</svg>\n");
    sink.write_all(s.as_bytes())?;
    sink.flush()?;
    Ok(())
}
