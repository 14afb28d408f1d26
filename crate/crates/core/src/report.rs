//! CSV and JSON reports.
//!
//! The expansion-sweep CSV has exactly these columns, one row per rung:
//! `rho, E_measured, mu_sum, interaction, prediction, residual,
//! residual_over_rho, Theta, theta_small, Xi, provenance`. Diagnostics that
//! were not computed are empty cells; failed rungs carry `NaN` energies.
//! JSON output wraps the full data model as `{ "provenance", "version", "data" }`.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::ExpansionReport;
use crate::solver::snapshot::write_atomic;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_COLUMNS: [&str; 11] = [
    "rho",
    "E_measured",
    "mu_sum",
    "interaction",
    "prediction",
    "residual",
    "residual_over_rho",
    "Theta",
    "theta_small",
    "Xi",
    "provenance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::invalid(format!("unknown format {s:?}; expected csv or json"))),
        }
    }
}

/// First 16 hex digits of `sha256(config || 0 || version)`.
pub fn provenance(config: &str) -> String {
    let mut h = Sha256::new();
    h.update(config.as_bytes());
    h.update([0u8]);
    h.update(VERSION.as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A plain table: header plus rows of preformatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Numerical(format!("csv encoding: {e}"));
        w.write_record(&self.columns).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Numerical(format!("csv encoding: {e}")))
    }
}

/// Shortest round-trip decimal.
pub fn cell(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map(cell).unwrap_or_default()
}

pub fn expansion_table(report: &ExpansionReport, provenance: &str) -> Table {
    let mut t = Table::new(&CSV_COLUMNS);
    for r in &report.rows {
        t.push(vec![
            cell(r.rho),
            cell(r.measured),
            cell(r.mu_sum),
            cell(r.interaction),
            cell(r.prediction),
            cell(r.residual),
            cell(r.residual_over_rho),
            opt_cell(r.theta.map(|d| d.big_theta)),
            opt_cell(r.theta.map(|d| d.small_theta)),
            opt_cell(r.theta.map(|d| d.xi)),
            provenance.to_string(),
        ]);
    }
    t
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a str,
    version: &'a str,
    data: &'a T,
}

pub fn to_json<T: Serialize>(data: &T, provenance: &str) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&Envelope {
        provenance,
        version: VERSION,
        data,
    })
    .map_err(|e| Error::Numerical(format!("json encoding: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn render_report(report: &ExpansionReport, format: Format, provenance: &str) -> Result<Vec<u8>> {
    match format {
        Format::Csv => expansion_table(report, provenance).to_csv(),
        Format::Json => to_json(report, provenance),
    }
}

/// Writes the report through a temporary file and an atomic rename.
pub fn write_report(report: &ExpansionReport, path: &Path, format: Format, provenance: &str) -> Result<()> {
    write_atomic(path, &render_report(report, format, provenance)?)
}
