//! Consistency check of published result tables: recompute each row's
//! weighted mIoU from its per-class columns and compare with the reported one.
//!
//! Input is CSV with a header naming at least `model`, `miou_glioma`,
//! `miou_meningioma`, `miou_pituitary` and `weighted_miou`; other columns
//! (such as ablation flags) are carried along and ignored.

use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::metrics::{weighted_miou, EvalWeights};

pub const DEFAULT_TOLERANCE: f64 = 0.06;

const CLASS_COLUMNS: [(&str, Label); 3] =
    [("miou_glioma", Label::Glioma), ("miou_meningioma", Label::Meningioma), ("miou_pituitary", Label::Pituitary)];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    /// 1-based line in the source text.
    pub line: usize,
    pub model: String,
    pub per_class: BTreeMap<Label, f64>,
    pub reported: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowCheck {
    pub row: TableRow,
    pub recomputed: f64,
    pub pass: bool,
}

impl RowCheck {
    pub fn gap(&self) -> f64 {
        (self.recomputed - self.row.reported).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCheck {
    pub rows: Vec<RowCheck>,
    pub tolerance: f64,
}

impl TableCheck {
    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.passed() == self.rows.len()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "{} line {} {}: reported {:.2} recomputed {:.4} gap {:.4}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.row.line,
                r.row.model,
                r.row.reported,
                r.recomputed,
                r.gap()
            ));
        }
        s.push_str(&format!("{}/{} rows within ±{}\n", self.passed(), self.rows.len(), self.tolerance));
        s
    }
}

fn table_err(line: usize, message: impl Into<String>) -> Error {
    Error::Table { line, message: message.into() }
}

pub fn parse_table(text: &str) -> Result<Vec<TableRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| table_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| table_err(1, format!("missing column {name:?}")));
    let model_col = col("model")?;
    let weighted_col = col("weighted_miou")?;
    let class_cols: Vec<(usize, Label)> = CLASS_COLUMNS.iter().map(|&(n, l)| Ok((col(n)?, l))).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            table_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| table_err(line, format!("{:?} is not a number in column {:?}", field, &headers[i])))?;
            if !v.is_finite() {
                return Err(table_err(line, format!("non-finite value in column {:?}", &headers[i])));
            }
            Ok(v)
        };
        let per_class = class_cols.iter().map(|&(i, l)| Ok((l, num(i)?))).collect::<Result<_>>()?;
        rows.push(TableRow { line, model: record[model_col].to_string(), per_class, reported: num(weighted_col)? });
    }
    if rows.is_empty() {
        return Err(table_err(1, "table has no data rows"));
    }
    Ok(rows)
}

pub fn check_rows(rows: Vec<TableRow>, weights: &EvalWeights, tolerance: f64) -> Result<TableCheck> {
    let rows = rows
        .into_iter()
        .map(|row| {
            let recomputed = weighted_miou(&row.per_class, weights)?;
            let pass = (recomputed - row.reported).abs() <= tolerance;
            Ok(RowCheck { row, recomputed, pass })
        })
        .collect::<Result<_>>()?;
    Ok(TableCheck { rows, tolerance })
}

pub fn verify_table_str(text: &str, weights: &EvalWeights, tolerance: f64) -> Result<TableCheck> {
    check_rows(parse_table(text)?, weights, tolerance)
}

pub fn verify_table(path: &Path, weights: &EvalWeights, tolerance: f64) -> Result<TableCheck> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    verify_table_str(&text, weights, tolerance)
}
