use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::EvalReport;
use crate::error::{Error, Result};

/// Column order of the comparison table.
pub const COLUMNS: [&str; 4] = ["Fixed", "MLP", "GAT", "BGAT"];

/// Marker written for methods that cannot serve a configuration.
pub const NOT_APPLICABLE: &str = "×";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Value(f64),
    NotApplicable,
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::NotApplicable => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Value(v) => format!("{v:.4}"),
            Cell::NotApplicable => NOT_APPLICABLE.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub n_antennas: usize,
    pub m_train: usize,
    pub m_test: usize,
}

/// Published value for a cell, kept alongside the measured one and never
/// compared against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub key: RowKey,
    pub column: String,
    pub ee: Option<f64>,
    pub latency_ms: Option<f64>,
}

/// Outcome of evaluating one method on one row.
#[derive(Debug, Clone)]
pub enum Outcome {
    Report(EvalReport),
    NotApplicable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub key: RowKey,
    pub ee: BTreeMap<String, Cell>,
    pub latency_ms: BTreeMap<String, Cell>,
    pub feasibility: BTreeMap<String, Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    pub references: Vec<Reference>,
}

impl CompareTable {
    pub fn cell(&self, key: RowKey, column: &str) -> Option<&Cell> {
        self.rows.iter().find(|r| r.key == key)?.ee.get(column)
    }

    /// Long-format CSV: one line per `(row, metric)` with the four method
    /// columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["N", "M_train", "M_test", "metric"];
        header.extend(COLUMNS);
        w.write_record(&header)?;
        for row in &self.rows {
            for (metric, cells) in [
                ("ee", &row.ee),
                ("inference_ms", &row.latency_ms),
                ("feasibility", &row.feasibility),
            ] {
                let mut rec = vec![
                    row.key.n_antennas.to_string(),
                    row.key.m_train.to_string(),
                    row.key.m_test.to_string(),
                    metric.to_string(),
                ];
                for c in COLUMNS {
                    rec.push(cells.get(c).unwrap_or(&Cell::NotApplicable).render());
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// Assembles the table. Every `(key, column)` in the grid without an
/// outcome is marked not applicable.
pub fn compare_table(
    grid: &[RowKey],
    outcomes: &[(RowKey, String, Outcome)],
    references: Vec<Reference>,
) -> Result<CompareTable> {
    let mut rows = Vec::with_capacity(grid.len());
    for &key in grid {
        let mut row = CompareRow {
            key,
            ee: BTreeMap::new(),
            latency_ms: BTreeMap::new(),
            feasibility: BTreeMap::new(),
        };
        for col in COLUMNS {
            row.ee.insert(col.into(), Cell::NotApplicable);
            row.latency_ms.insert(col.into(), Cell::NotApplicable);
            row.feasibility.insert(col.into(), Cell::NotApplicable);
        }
        for (k, col, outcome) in outcomes {
            if *k != key {
                continue;
            }
            if !COLUMNS.contains(&col.as_str()) {
                return Err(Error::InvalidInput(format!("unknown table column {col:?}")));
            }
            if let Outcome::Report(r) = outcome {
                row.ee.insert(col.clone(), Cell::Value(r.mean_ee));
                row.latency_ms.insert(col.clone(), Cell::Value(r.latency.median_ms));
                row.feasibility.insert(col.clone(), Cell::Value(r.feasibility_rate));
            }
        }
        rows.push(row);
    }
    Ok(CompareTable { rows, references })
}
