use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Float formatting for exported data: 17 significant digits, so values
/// round-trip exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A header plus string rows, written as CSV with LF line endings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let err = |e: csv::Error| Error::Data(format!("csv encoding failed: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            if row.len() != self.header.len() {
                return Err(Error::Contract(format!(
                    "row has {} cells for {} columns",
                    row.len(),
                    self.header.len()
                )));
            }
            w.write_record(row).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("csv encoding failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}
