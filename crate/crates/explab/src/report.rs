//! Convergence reports: per-step-size errors with estimated orders, emitted
//! as CSV (the machine contract) or a pretty table.
//!
//! CSV layout: one volatile header line `# explab v<semver> <ISO-timestamp>
//! wall=<secs>s`, one deterministic metadata line, then the column header
//! `step_size,<norm>_error,<norm>_order,…` and data rows in scientific
//! notation. Orders are the generalized log ratio ln(e₁/e₂)/ln(τ₁/τ₂), which
//! reduces to log₂ on halving ladders; the first row's order cells are empty.

use std::io::{self, Write};

use crate::LabError;

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub tau: f64,
    /// One error per requested norm; None when the run failed.
    pub errors: Vec<Option<f64>>,
    pub orders: Vec<Option<f64>>,
    /// Per-norm flag: the error sits below 10× the estimated floor.
    pub flagged: Vec<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub problem: String,
    pub method: String,
    pub correction: String,
    pub grid_n: usize,
    pub norm_labels: Vec<String>,
    pub reference: String,
    pub deviations: Vec<String>,
    pub wall_seconds: f64,
    pub timestamp: String,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Pretty,
}

/// Generalized order estimate between two ladder entries.
pub fn estimate_order(tau_prev: f64, err_prev: f64, tau: f64, err: f64) -> Option<f64> {
    if !(err_prev > 0.0 && err > 0.0 && tau_prev > tau) {
        return None;
    }
    Some((err_prev / err).ln() / (tau_prev / tau).ln())
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn emit_report(
    report: &ConvergenceReport,
    format: ReportFormat,
    out: &mut dyn Write,
) -> io::Result<()> {
    if report.rows.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty report"));
    }
    match format {
        ReportFormat::Csv => emit_csv(report, out),
        ReportFormat::Pretty => emit_pretty(report, out),
    }
}

fn emit_csv(report: &ConvergenceReport, out: &mut dyn Write) -> io::Result<()> {
    let m = &report.meta;
    writeln!(out, "# explab v{VERSION} {} wall={:.3}s", m.timestamp, m.wall_seconds)?;
    let deviations =
        if m.deviations.is_empty() { "none".to_string() } else { m.deviations.join("; ") };
    writeln!(
        out,
        "# problem={} method={} correction={} grid={} reference={} deviations={}",
        m.problem, m.method, m.correction, m.grid_n, m.reference, deviations
    )?;
    let flagged: Vec<String> = report
        .rows
        .iter()
        .flat_map(|r| {
            r.flagged.iter().enumerate().filter(|&(_, f)| *f).map(|(i, _)| {
                format!("{:.4e}({})", r.tau, m.norm_labels[i])
            })
        })
        .collect();
    if !flagged.is_empty() {
        writeln!(out, "# floor_flagged_rows={}", flagged.join(","))?;
    }
    write!(out, "step_size")?;
    for label in &m.norm_labels {
        write!(out, ",{label}_error,{label}_order")?;
    }
    writeln!(out)?;
    for row in &report.rows {
        write!(out, "{:.12e}", row.tau)?;
        for i in 0..m.norm_labels.len() {
            match row.errors[i] {
                Some(e) => write!(out, ",{e:.12e}")?,
                None => write!(out, ",")?,
            }
            match row.orders[i] {
                Some(o) => write!(out, ",{o:.12e}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn emit_pretty(report: &ConvergenceReport, out: &mut dyn Write) -> io::Result<()> {
    let m = &report.meta;
    writeln!(
        out,
        "{} | method {} | correction {} | grid {} | reference {}",
        m.problem, m.method, m.correction, m.grid_n, m.reference
    )?;
    if !m.deviations.is_empty() {
        writeln!(out, "deviations: {}", m.deviations.join("; "))?;
    }
    write!(out, "{:>12}", "step size")?;
    for label in &m.norm_labels {
        write!(out, "  {:>12} {:>7}", format!("{label} error"), "order")?;
    }
    writeln!(out)?;
    for row in &report.rows {
        write!(out, "{:>12.4e}", row.tau)?;
        for i in 0..m.norm_labels.len() {
            match row.errors[i] {
                Some(e) => write!(out, "  {e:>12.4e}")?,
                None => write!(out, "  {:>12}", "failed")?,
            }
            match row.orders[i] {
                Some(o) => write!(out, " {o:>7.2}")?,
                None => write!(out, " {:>7}", "--")?,
            }
            if row.flagged[i] {
                write!(out, "*")?;
            }
        }
        if let Some(note) = &row.note {
            write!(out, "   ({note})")?;
        }
        writeln!(out)?;
    }
    if report.rows.iter().any(|r| r.flagged.iter().any(|&f| f)) {
        writeln!(out, "(* error at or below 10x the estimated floor)")?;
    }
    Ok(())
}

/// Parsed CSV content: (norm labels, rows of (tau, errors, orders)).
#[allow(clippy::type_complexity)]
pub fn parse_csv(
    text: &str,
) -> Result<(Vec<String>, Vec<(f64, Vec<Option<f64>>, Vec<Option<f64>>)>), LabError> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if line.starts_with("step_size") {
            labels = line
                .split(',')
                .skip(1)
                .step_by(2)
                .map(|s| s.trim_end_matches("_error").to_string())
                .collect();
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let tau: f64 = cells[0]
            .parse()
            .map_err(|_| LabError::BadConfig(format!("bad step size cell `{}`", cells[0])))?;
        let mut errors = Vec::new();
        let mut orders = Vec::new();
        for pair in cells[1..].chunks(2) {
            errors.push(pair[0].parse::<f64>().ok());
            orders.push(pair.get(1).and_then(|s| s.parse::<f64>().ok()));
        }
        rows.push((tau, errors, orders));
    }
    if labels.is_empty() {
        return Err(LabError::BadConfig("CSV has no column header".into()));
    }
    Ok((labels, rows))
}
