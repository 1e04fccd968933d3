use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde_json::{Map, Value};

use super::ProfileError;

/// A single table cell. List values come from JSON arrays (or CSV cells that
/// hold a JSON array literal).
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Number(f64),
    Text(String),
    List(Vec<Cell>),
}

impl Cell {
    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    /// Numeric reading of the cell: numbers, and text that parses as one.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(n) => Some(*n),
            Cell::Text(s) => parse_number(s),
            _ => None,
        }
    }

    pub fn from_json(v: &Value) -> Cell {
        match v {
            Value::Null => Cell::Null,
            Value::Bool(b) => Cell::Text(b.to_string()),
            Value::Number(n) => n.as_f64().map(Cell::Number).unwrap_or(Cell::Null),
            Value::String(s) => text_cell(s),
            Value::Array(items) => Cell::List(items.iter().map(Cell::from_json).collect()),
            Value::Object(_) => Cell::Text(v.to_string()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Cell::Null => Value::Null,
            Cell::Number(n) => crate::spec::number_value(*n),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::List(items) => Value::Array(items.iter().map(Cell::to_json).collect()),
        }
    }
}

/// Canonical text used for grouping, distinct counts and samples.
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("null"),
            Cell::Number(n) => write!(f, "{}", crate::spec::number_value(*n)),
            Cell::Text(s) => f.write_str(s),
            Cell::List(_) => write!(f, "{}", self.to_json()),
        }
    }
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn text_cell(s: &str) -> Cell {
    match s.trim() {
        "" | "null" | "NA" => Cell::Null,
        _ => Cell::Text(s.to_string()),
    }
}

fn csv_cell(s: &str) -> Cell {
    let t = s.trim();
    if t.starts_with('[') && t.ends_with(']') {
        if let Ok(v @ Value::Array(_)) = serde_json::from_str::<Value>(t) {
            return Cell::from_json(&v);
        }
    }
    text_cell(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    JsonRecords,
}

impl TableFormat {
    pub fn from_path(path: &Path) -> Option<TableFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(TableFormat::Csv),
            "json" => Some(TableFormat::JsonRecords),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Table, ProfileError> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(ProfileError::DuplicateColumn(c.clone()));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(ProfileError::RaggedRow {
                    row: i + 1,
                    expected: columns.len(),
                    got: r.len(),
                });
            }
        }
        Ok(Table { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = &Cell> + '_> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(move |r| &r[idx]))
    }

    pub(crate) fn into_parts(self) -> (Vec<String>, Vec<Vec<Cell>>) {
        (self.columns, self.rows)
    }

    pub fn from_records(records: &[Map<String, Value>]) -> Result<Table, ProfileError> {
        let mut columns: Vec<String> = Vec::new();
        for r in records {
            for k in r.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        let rows = records
            .iter()
            .map(|r| {
                columns
                    .iter()
                    .map(|c| r.get(c).map(Cell::from_json).unwrap_or(Cell::Null))
                    .collect()
            })
            .collect();
        Table::new(columns, rows)
    }

    pub fn to_records(&self) -> Vec<Map<String, Value>> {
        self.rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), v.to_json()))
                    .collect()
            })
            .collect()
    }
}

/// Parses CSV (header row first) or a JSON array of records.
pub fn ingest_table(bytes: &[u8], format: TableFormat) -> Result<Table, ProfileError> {
    match format {
        TableFormat::Csv => ingest_csv(bytes),
        TableFormat::JsonRecords => {
            let v: Value =
                serde_json::from_slice(bytes).map_err(|e| ProfileError::Json(e.to_string()))?;
            let Value::Array(items) = v else {
                return Err(ProfileError::Json("expected a list of records".into()));
            };
            let mut records = Vec::with_capacity(items.len());
            for (i, item) in items.into_iter().enumerate() {
                match item {
                    Value::Object(o) => records.push(o),
                    _ => return Err(ProfileError::Json(format!("record {i} is not an object"))),
                }
            }
            Table::from_records(&records)
        }
    }
}

pub fn read_table(path: &Path) -> Result<Table, ProfileError> {
    let format = TableFormat::from_path(path)
        .ok_or_else(|| ProfileError::UnknownFormat(path.display().to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| ProfileError::Io(format!("{}: {e}", path.display())))?;
    ingest_table(&bytes, format)
}

fn ingest_csv(bytes: &[u8]) -> Result<Table, ProfileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| ProfileError::Csv(e.to_string()))?,
        None => return Table::new(Vec::new(), Vec::new()),
    };
    let columns: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| ProfileError::Csv(e.to_string()))?;
        if rec.len() != columns.len() {
            // Header is row 1.
            return Err(ProfileError::RaggedRow {
                row: i + 2,
                expected: columns.len(),
                got: rec.len(),
            });
        }
        rows.push(rec.iter().map(csv_cell).collect());
    }
    Table::new(columns, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_csv() {
        let t = ingest_table(b"a,b\n1,x\n2,y\n", TableFormat::Csv).unwrap();
        assert_eq!(t.columns(), ["a", "b"]);
        assert_eq!(t.row_count(), 2);
        assert_eq!(t.rows()[0][0].as_f64(), Some(1.0));
    }

    #[test]
    fn ragged_row_names_row_and_counts() {
        let err = ingest_table(b"a,b\n1,x,z\n", TableFormat::Csv).unwrap_err();
        assert_eq!(err.to_string(), "row 2: expected 2 cells, got 3");
    }

    #[test]
    fn duplicate_header_rejected() {
        let err = ingest_table(b"a,a\n1,2\n", TableFormat::Csv).unwrap_err();
        assert!(matches!(err, ProfileError::DuplicateColumn(c) if c == "a"));
    }

    #[test]
    fn null_spellings() {
        let t = ingest_table(b"a,b\n,NA\nnull,3\n", TableFormat::Csv).unwrap();
        assert!(t.rows()[0].iter().all(Cell::is_null));
        assert!(t.rows()[1][0].is_null());
    }

    #[test]
    fn json_records_with_lists_and_missing_keys() {
        let t = ingest_table(
            br#"[{"title":"A","genre":["Drama","War"]},{"title":"B","year":1999}]"#,
            TableFormat::JsonRecords,
        )
        .unwrap();
        assert_eq!(t.columns(), ["title", "genre", "year"]);
        assert!(matches!(&t.rows()[0][1], Cell::List(items) if items.len() == 2));
        assert!(t.rows()[0][2].is_null());
    }
}
