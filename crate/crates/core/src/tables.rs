//! Bundled transcriptions of the published result tables and their recomputation
//! from the raw rate columns.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    advantage, AdvantageReport, ChannelCounts, CoincidenceRatio, Measured, SinglesRatio, TransmittanceEstimate,
    TransmittanceEstimator,
};

const BUNDLED: [&str; 3] = [
    include_str!("../data/table1.csv"),
    include_str!("../data/table2.csv"),
    include_str!("../data/table3.csv"),
];

/// One transcribed row, exactly as printed. Rates in Kcps, transmittances in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintedRow {
    pub row: u32,
    pub label: String,
    pub note: Option<String>,
    pub concentration_ng_ul: Option<f64>,
    pub ncc_kcps: f64,
    pub ncc_err_kcps: f64,
    pub n2_kcps: f64,
    pub n2_err_kcps: f64,
    pub tcc_pct: Option<f64>,
    pub tcc_err_pct: Option<f64>,
    pub tsc_pct: Option<f64>,
    pub tsc_err_pct: Option<f64>,
    pub g_t: Option<f64>,
    pub g_n: Option<f64>,
}

/// Run parameters stated once per table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub n1_kcps: f64,
    pub n1_err_kcps: f64,
    pub gate_s: f64,
    pub tau_cc_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintedTable {
    pub id: u8,
    pub title: String,
    pub meta: TableMeta,
    pub rows: Vec<PrintedRow>,
}

fn meta_value(comments: &[&str], key: &str) -> Result<f64> {
    comments
        .iter()
        .flat_map(|l| l.split_whitespace())
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::parse("table header", format!("missing `{key}=`")))?
        .parse()
        .map_err(|e| Error::parse("table header", format!("{key}: {e}")))
}

pub fn parse_table(id: u8, text: &str) -> Result<PrintedTable> {
    let comments: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .map(str::trim)
        .collect();
    let title = comments.first().copied().unwrap_or_default().to_string();
    let meta = TableMeta {
        n1_kcps: meta_value(&comments, "n1_kcps")?,
        n1_err_kcps: meta_value(&comments, "n1_err_kcps")?,
        gate_s: meta_value(&comments, "gate_s")?,
        tau_cc_ns: meta_value(&comments, "tau_cc_ns")?,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<PrintedRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::parse(format!("table {id}"), "no rows"));
    }
    for r in &rows {
        let spreads = [r.ncc_err_kcps, r.n2_err_kcps];
        if spreads.iter().any(|s| !(*s >= 0.0)) || !(r.ncc_kcps > 0.0 && r.n2_kcps > 0.0) {
            return Err(Error::parse(
                format!("table {id} row {}", r.row),
                "rates must be positive with non-negative spreads",
            ));
        }
    }
    Ok(PrintedTable { id, title, meta, rows })
}

/// Loads table `id` (1–3), from `data_dir/table{id}.csv` when given, else the bundled copy.
pub fn load_table(id: u8, data_dir: Option<&Path>) -> Result<PrintedTable> {
    if !(1..=3).contains(&id) {
        return Err(Error::InvalidConfig(format!("no table {id}; tables are 1, 2 and 3")));
    }
    match data_dir {
        Some(dir) => {
            let path = dir.join(format!("table{id}.csv"));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            parse_table(id, &text)
        }
        None => parse_table(id, BUNDLED[id as usize - 1]),
    }
}

/// Recomputed minus printed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDeltas {
    pub tcc: Option<f64>,
    pub tcc_err: Option<f64>,
    pub tsc: Option<f64>,
    pub tsc_err: Option<f64>,
    pub g_t: Option<f64>,
    pub g_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub row: u32,
    pub label: String,
    pub concentration_ng_ul: Option<f64>,
    pub is_reference: bool,
    /// Kcps.
    pub ncc: Measured,
    /// Kcps.
    pub n2: Measured,
    pub t_cc: Option<TransmittanceEstimate>,
    pub t_sc: Option<TransmittanceEstimate>,
    /// SNRs and sensitivities use rates in cps.
    pub figures: AdvantageReport,
    pub printed: PrintedRow,
    pub delta: RowDeltas,
}

fn counts(row: &PrintedRow, meta: &TableMeta) -> ChannelCounts {
    let mut c = ChannelCounts::bare(
        row.label.clone(),
        Measured::new(row.ncc_kcps * 1e3, row.ncc_err_kcps * 1e3),
        // every row shares the table's mean idler rate, so its spread cancels
        Measured::new(meta.n1_kcps * 1e3, meta.n1_err_kcps * 1e3),
        Measured::new(row.n2_kcps * 1e3, row.n2_err_kcps * 1e3),
    );
    c.gate_s = meta.gate_s;
    c.tau_cc_ns = meta.tau_cc_ns;
    c
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Recomputes every row of `table` against the row labelled `reference_label`
/// (the first row when absent).
pub fn reproduce(table: &PrintedTable, reference_label: Option<&str>) -> Result<Vec<TableRow>> {
    let reference_index = match reference_label {
        None => 0,
        Some(label) => table
            .rows
            .iter()
            .position(|r| r.label == label)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "no row labelled `{label}` in table {}; labels: {}",
                    table.id,
                    table.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>().join(", ")
                ))
            })?,
    };
    let reference = counts(&table.rows[reference_index], &table.meta);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, printed)| {
            let c = counts(printed, &table.meta);
            let is_reference = i == reference_index;
            let (t_cc, t_sc) = if is_reference {
                (None, None)
            } else {
                (
                    Some(CoincidenceRatio.estimate(&c, &reference)?),
                    Some(SinglesRatio.estimate(&c, &reference)?),
                )
            };
            let figures = advantage(c.ncc, c.n2, t_cc.zip(t_sc))?;
            let delta = RowDeltas {
                tcc: diff(t_cc.map(|t| t.mean), printed.tcc_pct),
                tcc_err: diff(t_cc.map(|t| t.uncertainty), printed.tcc_err_pct),
                tsc: diff(t_sc.map(|t| t.mean), printed.tsc_pct),
                tsc_err: diff(t_sc.map(|t| t.uncertainty), printed.tsc_err_pct),
                g_t: diff(figures.g_t, printed.g_t),
                g_n: diff(Some(figures.g_n), printed.g_n),
            };
            Ok(TableRow {
                row: printed.row,
                label: printed.label.clone(),
                concentration_ng_ul: printed.concentration_ng_ul,
                is_reference,
                ncc: Measured::new(printed.ncc_kcps, printed.ncc_err_kcps),
                n2: Measured::new(printed.n2_kcps, printed.n2_err_kcps),
                t_cc,
                t_sc,
                figures,
                printed: printed.clone(),
                delta,
            })
        })
        .collect()
}

pub fn reproduce_table(id: u8, data_dir: Option<&Path>, reference_label: Option<&str>) -> Result<Vec<TableRow>> {
    reproduce(&load_table(id, data_dir)?, reference_label)
}
