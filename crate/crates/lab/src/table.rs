//! The results table: one CSV row per sweep point.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{format_err, io_err, LabError, Result};
use crate::protocol::RunRecord;

/// Bumped whenever [`COLUMNS`] changes.
pub const TABLE_VERSION: u32 = 1;

pub const COLUMNS: [&str; 15] = [
    "sweep_kind",
    "sweep_value",
    "seed",
    "epochs",
    "train_loss",
    "train_err",
    "test_loss",
    "test_err",
    "norm_kind",
    "norm_train_loss",
    "norm_test_loss",
    "norm_train_err",
    "norm_test_err",
    "product_norm",
    "selected_epoch",
];

/// Rounds to the 9 significant digits the table stores.
pub fn quantize(v: f64) -> f64 {
    format_sig(v).parse().expect("formatted float parses")
}

fn format_sig(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_kind: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub epochs: usize,
    pub train_loss: f64,
    pub train_err: f64,
    pub test_loss: f64,
    pub test_err: f64,
    pub norm_kind: String,
    pub norm_train_loss: f64,
    pub norm_test_loss: f64,
    pub norm_train_err: f64,
    pub norm_test_err: f64,
    pub product_norm: f64,
    pub selected_epoch: usize,
}

impl ResultRow {
    pub fn from_record(r: &RunRecord) -> Self {
        ResultRow {
            sweep_kind: r.point.sweep_kind().into(),
            sweep_value: r.point.value(),
            seed: r.seeds.init,
            epochs: r.epochs_trained,
            train_loss: r.train_loss,
            train_err: r.train_error,
            test_loss: r.test_loss,
            test_err: r.test_error,
            norm_kind: r.norm_kind.to_string(),
            norm_train_loss: r.norm_train_loss,
            norm_test_loss: r.norm_test_loss,
            norm_train_err: r.norm_train_error,
            norm_test_err: r.norm_test_error,
            product_norm: r.product_norm,
            selected_epoch: r.selected_epoch,
        }
    }

    fn floats_mut(&mut self) -> [&mut f64; 10] {
        [
            &mut self.sweep_value,
            &mut self.train_loss,
            &mut self.train_err,
            &mut self.test_loss,
            &mut self.test_err,
            &mut self.norm_train_loss,
            &mut self.norm_test_loss,
            &mut self.norm_train_err,
            &mut self.norm_test_err,
            &mut self.product_norm,
        ]
    }

    /// Numeric column by name.
    pub fn get(&self, column: &str) -> Option<f64> {
        Some(match column {
            "sweep_value" => self.sweep_value,
            "seed" => self.seed as f64,
            "epochs" => self.epochs as f64,
            "train_loss" => self.train_loss,
            "train_err" => self.train_err,
            "test_loss" => self.test_loss,
            "test_err" => self.test_err,
            "norm_train_loss" => self.norm_train_loss,
            "norm_test_loss" => self.norm_test_loss,
            "norm_train_err" => self.norm_train_err,
            "norm_test_err" => self.norm_test_err,
            "product_norm" => self.product_norm,
            "selected_epoch" => self.selected_epoch as f64,
            _ => return None,
        })
    }

    fn fields(&self) -> [String; 15] {
        [
            self.sweep_kind.clone(),
            format_sig(self.sweep_value),
            self.seed.to_string(),
            self.epochs.to_string(),
            format_sig(self.train_loss),
            format_sig(self.train_err),
            format_sig(self.test_loss),
            format_sig(self.test_err),
            self.norm_kind.clone(),
            format_sig(self.norm_train_loss),
            format_sig(self.norm_test_loss),
            format_sig(self.norm_train_err),
            format_sig(self.norm_test_err),
            format_sig(self.product_norm),
            self.selected_epoch.to_string(),
        ]
    }
}

/// Rows in sweep order. Numeric fields are finite and held at table precision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        let mut t = Self::new();
        for r in records {
            t.push(ResultRow::from_record(r))?;
        }
        Ok(t)
    }

    /// Appends a row after rounding it to table precision.
    pub fn push(&mut self, mut row: ResultRow) -> Result<()> {
        let kind = row.sweep_kind.clone();
        for v in row.floats_mut() {
            if !v.is_finite() {
                return Err(LabError::Invalid(format!("non-finite value in results row `{kind}`")));
            }
            *v = quantize(*v);
        }
        if row.sweep_kind.contains([',', '"', '\n']) || row.norm_kind.contains([',', '"', '\n']) {
            return Err(LabError::Invalid("text fields must not contain CSV delimiters".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.fields().join(","));
        }
        out
    }

    /// Parses CSV text; `origin` names the source in errors.
    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let bad = |msg: String| format_err(origin, msg);
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != COLUMNS {
            return Err(bad(format!("unexpected columns {header:?}")));
        }
        let mut table = Self::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| bad(format!("row {}: {}: {e}", line + 1, COLUMNS[i])))
            };
            let u = |i: usize| -> Result<u64> {
                rec[i].parse::<u64>().map_err(|e| bad(format!("row {}: {}: {e}", line + 1, COLUMNS[i])))
            };
            table.push(ResultRow {
                sweep_kind: rec[0].to_string(),
                sweep_value: f(1)?,
                seed: u(2)?,
                epochs: u(3)? as usize,
                train_loss: f(4)?,
                train_err: f(5)?,
                test_loss: f(6)?,
                test_err: f(7)?,
                norm_kind: rec[8].to_string(),
                norm_train_loss: f(9)?,
                norm_test_loss: f(10)?,
                norm_train_err: f(11)?,
                norm_test_err: f(12)?,
                product_norm: f(13)?,
                selected_epoch: u(14)? as usize,
            })
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_csv(&text, path)
    }

    /// `(x, y)` pairs for two numeric columns, optionally restricted to rows
    /// whose `sweep_kind` is listed.
    pub fn pairs(&self, x: &str, y: &str, kinds: Option<&[String]>) -> Result<Vec<(f64, f64)>> {
        let col = |r: &ResultRow, c: &str| {
            r.get(c).ok_or_else(|| LabError::Invalid(format!("unknown numeric column `{c}`")))
        };
        self.rows
            .iter()
            .filter(|r| kinds.is_none_or(|k| k.iter().any(|k| *k == r.sweep_kind)))
            .map(|r| Ok((col(r, x)?, col(r, y)?)))
            .collect()
    }
}
