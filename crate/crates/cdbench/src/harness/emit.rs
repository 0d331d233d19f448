//! Report emission: newline-delimited JSON, CSV and a static SVG summary.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every finite f64 exactly; all output is a pure function of
//! the report set, so repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReportSet, Resolved, Scenario, Summary};
use super::scenario::Format;
use crate::error::{BenchError, Result};
use crate::inequalities::{CheckReport, Statement};

pub const SCHEMA: &str = "cdbench-report-v1";

/// JSON formatter writing every float in fixed scientific notation.
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", v as f64)
    }
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value.serialize(&mut ser).expect("report types serialise");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// One line of the JSON output per report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub schema: String,
    pub kind: String,
    pub scenario: String,
    /// Index of the scenario check that produced the report.
    pub check: usize,
    pub falsification: bool,
    #[serde(flatten)]
    pub report: CheckReport,
}

/// Trailing line of the JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub schema: String,
    pub kind: String,
    pub scenario: Scenario,
    pub resolved: Resolved,
    pub summary: Summary,
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> BenchError + '_ {
    move |e| BenchError::io(path.display().to_string(), e)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// The JSON report text: one object per report, then the summary.
pub fn json_string(rs: &ReportSet) -> String {
    let mut out = String::new();
    for e in &rs.reports {
        let line = ReportLine {
            schema: SCHEMA.into(),
            kind: "report".into(),
            scenario: rs.scenario.name.clone(),
            check: e.check,
            falsification: rs.scenario.falsification,
            report: e.report.clone(),
        };
        out.push_str(&to_json_line(&line));
        out.push('\n');
    }
    let summary = SummaryLine {
        schema: SCHEMA.into(),
        kind: "summary".into(),
        scenario: rs.scenario.clone(),
        resolved: rs.resolved.clone(),
        summary: rs.summary.clone(),
    };
    out.push_str(&to_json_line(&summary));
    out.push('\n');
    out
}

/// Parses JSON written by [`emit_reports`].
pub fn read_json(path: &Path) -> Result<(Vec<ReportLine>, SummaryLine)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reports = Vec::new();
    let mut summary = None;
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| BenchError::Scenario { stage: "read", message: format!("line {}: {e}", i + 1) };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(bad)?;
        if value.get("schema").and_then(|s| s.as_str()) != Some(SCHEMA) {
            return Err(BenchError::Scenario { stage: "read", message: format!("line {}: unknown schema", i + 1) });
        }
        match value.get("kind").and_then(|k| k.as_str()) {
            Some("report") => reports.push(serde_json::from_str(&line).map_err(bad)?),
            Some("summary") => summary = Some(serde_json::from_str(&line).map_err(bad)?),
            _ => return Err(BenchError::Scenario { stage: "read", message: format!("line {}: unknown kind", i + 1) }),
        }
    }
    let summary = summary.ok_or_else(|| BenchError::Scenario { stage: "read", message: "missing summary line".into() })?;
    Ok((reports, summary))
}

pub const CSV_HEADER: &str = "statement,lhs,rhs,margin,tol,pass,witness,flags";

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn flags(r: &CheckReport, falsification: bool) -> String {
    let mut f = Vec::new();
    if r.diagnostics.degraded {
        f.push("degraded".to_string());
    }
    if r.diagnostics.clamps > 0 {
        f.push(format!("clamps={}", r.diagnostics.clamps));
    }
    if r.diagnostics.slack > 0.0 {
        f.push("slack".to_string());
    }
    if falsification && !r.pass {
        f.push("expected_fail".to_string());
    }
    f.join("|")
}

pub fn csv_string(rs: &ReportSet) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for e in &rs.reports {
        let r = &e.report;
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
            r.statement,
            r.lhs,
            r.rhs,
            r.margin,
            r.tol,
            r.pass,
            csv_quote(&r.witness_string()),
            flags(r, rs.scenario.falsification)
        );
    }
    out
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 240.0;
const PAD: f64 = 44.0;
const COLS: usize = 2;

/// Horizontal parameter for a report: t, else θ, else r, else its index.
fn x_param(r: &CheckReport, index: usize) -> (&'static str, f64) {
    let w = &r.witness;
    if let Some(t) = w.t {
        ("t", t)
    } else if let Some(theta) = w.theta {
        ("theta", theta)
    } else if let Some(r) = w.r {
        ("r", r)
    } else {
        ("index", index as f64)
    }
}

/// Margin-vs-parameter scatter, one panel per statement. The vertical axis
/// is `sgn(m)·log10(1 + |m|/τ)` with τ the smallest tolerance in the panel,
/// so the pass threshold sits near −0.3 and large margins stay readable.
pub fn svg_string(rs: &ReportSet) -> String {
    let statements: Vec<Statement> =
        Statement::ALL.iter().copied().filter(|s| rs.reports.iter().any(|e| e.report.statement == *s)).collect();
    let rows = statements.len().div_ceil(COLS).max(1);
    let (w, h) = (PANEL_W * COLS as f64, PANEL_H * rows as f64 + 30.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let s = &rs.summary;
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-size="14">{}: {} reports, {} passed, {} failed, {} degraded (K={:.6}, n={})</text>"#,
        xml_escape(&rs.scenario.name),
        s.total,
        s.passed,
        s.failed,
        s.degraded,
        rs.resolved.k,
        rs.resolved.n
    );
    for (pi, st) in statements.iter().enumerate() {
        let ox = PANEL_W * (pi % COLS) as f64;
        let oy = 30.0 + PANEL_H * (pi / COLS) as f64;
        let pts: Vec<(&str, f64, &CheckReport)> = rs
            .reports
            .iter()
            .enumerate()
            .filter(|(_, e)| e.report.statement == *st)
            .map(|(i, e)| {
                let (name, x) = x_param(&e.report, i);
                (name, x, &e.report)
            })
            .collect();
        let tau = pts.iter().map(|p| p.2.tol).filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
        let tau = if tau.is_finite() { tau } else { 1e-12 };
        let yv = |m: f64| m.signum() * (1.0 + m.abs() / tau).log10();
        let xs: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let log_x = xmin > 0.0 && xmax / xmin > 5.0;
        let xt = |x: f64| if log_x { x.log10() } else { x };
        let (x0, x1) = (xt(xmin), xt(xmax));
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
        let ys: Vec<f64> = pts.iter().map(|p| yv(p.2.margin)).chain([0.0, yv(-tau)]).collect();
        let (y0, y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
        let (y0, y1) = if y1 > y0 { (y0, y1) } else { (y0 - 1.0, y0 + 1.0) };
        let (pw, ph) = (PANEL_W - 2.0 * PAD, PANEL_H - 2.0 * PAD);
        let px = |x: f64| ox + PAD + (xt(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| oy + PAD + (y1 - y) / (y1 - y0) * ph;
        let passed = pts.iter().filter(|p| p.2.pass).count();
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#888"/>"##,
            ox + PAD,
            oy + PAD
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{st}: {passed}/{} pass, tau={tau:.3e}</text>"#,
            ox + PAD,
            oy + PAD - 8.0,
            pts.len()
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#444" stroke-dasharray="4 3"/>"##,
            ox + PAD,
            py(0.0),
            ox + PAD + pw,
            py(0.0)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c33" stroke-dasharray="2 2"/>"##,
            ox + PAD,
            py(yv(-tau)),
            ox + PAD + pw,
            py(yv(-tau))
        );
        let xname = pts.first().map(|p| p.0).unwrap_or("index");
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{xname}{} [{xmin:.3e}, {xmax:.3e}]</text>"#,
            ox + PAD,
            oy + PANEL_H - PAD + 16.0,
            if log_x { " (log)" } else { "" }
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" transform="rotate(-90 {:.2} {:.2})">margin [{y0:.2}, {y1:.2}]</text>"#,
            ox + 14.0,
            oy + PANEL_H - PAD,
            ox + 14.0,
            oy + PANEL_H - PAD
        );
        for (_, x, r) in &pts {
            let color = match (r.pass, rs.scenario.falsification) {
                (true, _) => "#2a7",
                (false, true) => "#e90",
                (false, false) => "#d22",
            };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#,
                px(*x),
                py(yv(r.margin))
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes the report set in one format to `path`.
pub fn emit_reports(rs: &ReportSet, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Json => json_string(rs),
        Format::Csv => csv_string(rs),
        Format::Svg => svg_string(rs),
    };
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// File name used for each format inside an output directory.
pub fn file_name(format: Format) -> &'static str {
    match format {
        Format::Json => "reports.json",
        Format::Csv => "reports.csv",
        Format::Svg => "summary.svg",
    }
}

/// Writes every requested format into `dir`, plus the run timing as a
/// separate file; returns the report paths.
pub fn emit_all(rs: &ReportSet, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for &f in formats {
        let path = dir.join(file_name(f));
        emit_reports(rs, f, &path)?;
        paths.push(path);
    }
    let timing = dir.join("timing.json");
    let mut w = create(&timing)?;
    serde_json::to_writer_pretty(&mut w, &rs.timing).expect("timing serialises");
    w.flush().map_err(io_err(&timing))?;
    Ok(paths)
}
