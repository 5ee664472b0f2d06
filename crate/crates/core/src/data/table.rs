use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Cell literals treated as missing, compared case-insensitively after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingValues {
    literals: Vec<String>,
}

impl Default for MissingValues {
    fn default() -> Self {
        Self::new(["", "NA", "N/A", "nan", "null"])
    }
}

impl MissingValues {
    pub fn new<I, S>(literals: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            literals: literals
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .collect(),
        }
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        let t = cell.trim();
        t.is_empty() || self.literals.iter().any(|l| l.eq_ignore_ascii_case(t))
    }

    pub fn literals(&self) -> &[String] {
        &self.literals
    }
}

/// A loaded CSV: header, row-major cells (`None` = missing) and the target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    column_names: Vec<String>,
    cells: Vec<Vec<Option<String>>>,
    target_index: usize,
}

impl RawTable {
    pub fn new(
        column_names: Vec<String>,
        cells: Vec<Vec<Option<String>>>,
        target_index: usize,
    ) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        if target_index >= column_names.len() {
            return Err(DataError::MissingTarget(format!("#{target_index}")));
        }
        if cells.is_empty() {
            return Err(DataError::EmptyData);
        }
        for (i, row) in cells.iter().enumerate() {
            if row.len() != column_names.len() {
                return Err(DataError::MalformedCsv(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    row.len(),
                    column_names.len()
                )));
            }
        }
        Ok(Self {
            column_names,
            cells,
            target_index,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target_name(&self) -> &str {
        &self.column_names[self.target_index]
    }

    pub fn rows(&self) -> &[Vec<Option<String>>] {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.cells[row][col].as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, col: usize) -> Vec<Option<String>> {
        self.cells.iter().map(|r| r[col].clone()).collect()
    }

    pub fn target(&self) -> Vec<Option<String>> {
        self.column(self.target_index)
    }

    /// Indices of feature (non-target) columns in header order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.n_cols()).filter(|&c| c != self.target_index).collect()
    }

    /// Copies the given rows (in the given order) into a new table.
    pub fn select_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            column_names: self.column_names.clone(),
            cells: rows.iter().map(|&r| self.cells[r].clone()).collect(),
            target_index: self.target_index,
        }
    }

    /// Removes rows whose target is missing and returns how many were dropped.
    pub fn drop_missing_target(&mut self) -> usize {
        let before = self.cells.len();
        let t = self.target_index;
        self.cells.retain(|r| r[t].is_some());
        before - self.cells.len()
    }

    /// Approximate size in bytes of the table as CSV text.
    pub fn size_bytes(&self) -> usize {
        let header: usize = self.column_names.iter().map(|c| c.len() + 1).sum();
        let body: usize = self
            .cells
            .iter()
            .map(|r| r.iter().map(|c| c.as_ref().map_or(0, String::len) + 1).sum::<usize>())
            .sum();
        header + body
    }

    /// Writes the table as CSV, missing cells as empty fields.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names)
            .map_err(|e| DataError::Io(e.to_string()))?;
        for row in &self.cells {
            w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))
                .map_err(|e| DataError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| DataError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn parse_csv(text: &str, target_name: &str, missing: &MissingValues) -> Result<Self, DataError> {
        if text.bytes().filter(|&b| b == b'"').count() % 2 == 1 {
            return Err(DataError::MalformedCsv("unterminated quoted field".into()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| DataError::MalformedCsv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let target_index = header
            .iter()
            .position(|h| h == target_name)
            .ok_or_else(|| DataError::MissingTarget(target_name.to_string()))?;
        let mut cells = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DataError::MalformedCsv(e.to_string()))?;
            if record.len() == 1 && record.get(0) == Some("") && header.len() > 1 {
                continue;
            }
            cells.push(
                record
                    .iter()
                    .map(|c| {
                        if missing.is_missing(c) {
                            None
                        } else {
                            Some(c.to_string())
                        }
                    })
                    .collect(),
            );
        }
        if cells.is_empty() {
            return Err(DataError::EmptyData);
        }
        Self::new(header, cells, target_index)
    }
}

/// Loads a headed UTF-8 CSV file.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_name: &str,
    missing: &MissingValues,
) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    RawTable::parse_csv(&text, target_name, missing)
}
