use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MvpError, Result};

/// One table row: a value per view column and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub values: Vec<f64>,
    pub average: f64,
}

impl ReportRow {
    /// Average is the unweighted mean over columns, skipping NaN cells.
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        let average = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        Self {
            name: name.into(),
            values,
            average,
        }
    }
}

/// Table (usually one column per view) plus scalar summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub scalars: Vec<(String, f64)>,
    pub metadata: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(protocol: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            protocol: protocol.into(),
            columns,
            rows: Vec::new(),
            scalars: Vec::new(),
            metadata: Vec::new(),
        }
    }

    /// Columns labelled by yaw in degrees.
    pub fn for_views(protocol: impl Into<String>, views: &[f64]) -> Self {
        Self::new(protocol, views.iter().map(f64::to_string).collect())
    }

    pub fn push_row(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(MvpError::dim(
                "EvalReport::push_row",
                format!("{} values for {} columns", values.len(), self.columns.len()),
            ));
        }
        self.rows.push(ReportRow::new(name, values));
        Ok(())
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: f64) {
        self.scalars.push((name.into(), value));
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for c in &self.columns {
            let _ = write!(s, ",{c}");
        }
        s.push_str(",average\n");
        for r in &self.rows {
            s.push_str(&r.name);
            for v in &r.values {
                let _ = write!(s, ",{v:.6}");
            }
            let _ = writeln!(s, ",{:.6}", r.average);
        }
        s
    }

    /// `key = value` lines: protocol, metadata, then scalars.
    pub fn summary(&self) -> String {
        let mut s = format!("protocol = {}\n", self.protocol);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "{k} = {v}");
        }
        for r in &self.rows {
            let _ = writeln!(s, "{}.average = {:.6}", r.name, r.average);
        }
        for (k, v) in &self.scalars {
            let _ = writeln!(s, "{k} = {v:.6}");
        }
        s
    }

    /// Writes the table to `path` and the summary next to it with a `.txt` extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| MvpError::io(path, e))?;
        let txt = path.with_extension("txt");
        fs::write(&txt, self.summary()).map_err(|e| MvpError::io(&txt, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut r = EvalReport::for_views("recognition", &[-15.0, 0.0, 15.0]);
        r.push_row("accuracy", vec![0.5, 1.0, 0.75]).unwrap();
        r.push_scalar("chance", 0.05);
        r.push_meta("seed", 3);
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "row,-15,0,15,average");
        assert_eq!(csv.lines().nth(1).unwrap(), "accuracy,0.500000,1.000000,0.750000,0.750000");
        assert!(r.summary().contains("seed = 3"));
        assert_eq!(r.scalar("chance"), Some(0.05));
        assert!(r.push_row("bad", vec![1.0]).is_err());
    }

    #[test]
    fn average_skips_missing_cells() {
        let row = ReportRow::new("x", vec![1.0, f64::NAN, 3.0]);
        assert_eq!(row.average, 2.0);
    }
}
