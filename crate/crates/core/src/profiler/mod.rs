//! Dataset ingestion, column kind inference and statistical profiles.

mod table;
pub(crate) mod temporal;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::spec::Kind;

pub use table::{ingest_table, read_table, Cell, Table, TableFormat};

/// Fraction of non-null values that must parse for a temporal or
/// quantitative classification.
pub const PARSE_RATE_THRESHOLD: f64 = 0.95;
pub const SAMPLE_COUNT: usize = 5;
pub const MIN_SUMMARY_BUDGET: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("{0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
    #[error("cannot infer table format of {0}; use .csv or .json")]
    UnknownFormat(String),
    #[error("row {row}: expected {expected} cells, got {got}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("duplicate column name: {0}")]
    DuplicateColumn(String),
    #[error("summary budget of {budget} chars is too small; column names alone need {needed}")]
    BudgetTooSmall { budget: usize, needed: usize },
}

const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];
const MONTH_ABBR: [&str; 13] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];
const WEEKDAYS: [&str; 7] = [
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];
const WEEKDAY_ABBR: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
const RATINGS: [&str; 3] = ["low", "medium", "high"];

const ORDERED_SETS: [&[&str]; 5] = [&MONTHS, &MONTH_ABBR, &WEEKDAYS, &WEEKDAY_ABBR, &RATINGS];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KindInference {
    pub kind: Kind,
    /// Set when every value was null and the kind is a default.
    pub all_null: bool,
}

fn has_temporal_hint(name: &str) -> bool {
    crate::mapper::name_tokens(name)
        .iter()
        .any(|t| t == "year" || t == "date")
}

/// Classifies raw cell values; `name` enables the bare-year temporal rule.
pub fn infer_column_kind(name: &str, values: &[Cell]) -> KindInference {
    let present: Vec<&Cell> = values.iter().filter(|c| !c.is_null()).collect();
    if present.is_empty() {
        return KindInference {
            kind: Kind::Nominal,
            all_null: true,
        };
    }
    let hint = has_temporal_hint(name);
    let total = present.len() as f64;
    let temporal = present
        .iter()
        .filter(|c| temporal::parse_cell(c, hint).is_some())
        .count() as f64;
    let kind = if temporal / total >= PARSE_RATE_THRESHOLD {
        Kind::Temporal
    } else if present.iter().filter(|c| c.as_f64().is_some()).count() as f64 / total
        >= PARSE_RATE_THRESHOLD
    {
        Kind::Quantitative
    } else if is_ordered_set(&present) {
        Kind::Ordinal
    } else {
        Kind::Nominal
    };
    KindInference {
        kind,
        all_null: false,
    }
}

fn is_ordered_set(values: &[&Cell]) -> bool {
    let lowered: Vec<String> = match values
        .iter()
        .map(|c| match c {
            Cell::Text(s) => Some(s.trim().to_ascii_lowercase()),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()
    {
        Some(v) => v,
        None => return false,
    };
    ORDERED_SETS
        .iter()
        .any(|set| lowered.iter().all(|v| set.contains(&v.as_str())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalExtent {
    pub earliest: String,
    pub latest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleValue {
    pub value: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnProfile {
    pub name: String,
    pub kind: Kind,
    pub row_count: usize,
    pub null_count: usize,
    /// Distinct non-null values.
    pub distinct_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalExtent>,
    pub samples: Vec<SampleValue>,
    #[serde(default)]
    pub list_valued: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetProfile {
    pub source: String,
    pub row_count: usize,
    pub columns: Vec<ColumnProfile>,
}

impl DatasetProfile {
    pub fn column(&self, name: &str) -> Option<&ColumnProfile> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }
}

/// A table together with its profile; most rewriting steps need both.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: Table,
    pub profile: DatasetProfile,
}

impl Dataset {
    pub fn new(source: impl Into<String>, table: Table) -> Dataset {
        let profile = profile_dataset(source, &table);
        Dataset { table, profile }
    }

    pub fn load(path: &std::path::Path) -> Result<Dataset, ProfileError> {
        let table = read_table(path)?;
        let source = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Dataset::new(source, table))
    }
}

pub fn profile_dataset(source: impl Into<String>, table: &Table) -> DatasetProfile {
    let columns = (0..table.columns().len())
        .into_par_iter()
        .map(|i| {
            let values: Vec<Cell> = table.rows().iter().map(|r| r[i].clone()).collect();
            profile_column(&table.columns()[i], &values)
        })
        .collect();
    DatasetProfile {
        source: source.into(),
        row_count: table.row_count(),
        columns,
    }
}

fn profile_column(name: &str, values: &[Cell]) -> ColumnProfile {
    let inference = infer_column_kind(name, values);
    let null_count = values.iter().filter(|c| c.is_null()).count();
    let mut freq: HashMap<String, usize> = HashMap::new();
    for v in values.iter().filter(|c| !c.is_null()) {
        *freq.entry(v.to_string()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let distinct_count = ranked.len();
    let samples = ranked
        .into_iter()
        .take(SAMPLE_COUNT)
        .map(|(value, count)| SampleValue { value, count })
        .collect();

    let numeric = (inference.kind == Kind::Quantitative)
        .then(|| numeric_stats(values.iter().filter_map(Cell::as_f64)))
        .flatten();
    let temporal = (inference.kind == Kind::Temporal)
        .then(|| {
            let hint = has_temporal_hint(name);
            let mut parsed: Vec<_> = values
                .iter()
                .filter_map(|c| temporal::parse_cell(c, hint).map(|t| (t, c.to_string())))
                .collect();
            parsed.sort();
            Some(TemporalExtent {
                earliest: parsed.first()?.1.clone(),
                latest: parsed.last()?.1.clone(),
            })
        })
        .flatten();

    ColumnProfile {
        name: name.to_string(),
        kind: inference.kind,
        row_count: values.len(),
        null_count,
        distinct_count,
        numeric,
        temporal,
        samples,
        list_valued: values.iter().any(|c| matches!(c, Cell::List(_))),
        warning: inference
            .all_null
            .then(|| "all values are null; kind defaulted to nominal".to_string()),
    }
}

fn numeric_stats(values: impl Iterator<Item = f64>) -> Option<NumericStats> {
    let mut n = 0usize;
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for v in values {
        n += 1;
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    (n > 0).then(|| NumericStats {
        min,
        max,
        // Clamp guards against rounding pushing the mean past an extreme.
        mean: (sum / n as f64).clamp(min, max),
    })
}

fn column_payload(c: &ColumnProfile, samples: usize, stats: bool) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("name".into(), json!(c.name));
    m.insert("kind".into(), json!(c.kind.letter()));
    if stats {
        m.insert("nullCount".into(), json!(c.null_count));
        m.insert("distinctCount".into(), json!(c.distinct_count));
        if let Some(n) = &c.numeric {
            m.insert("min".into(), json!(n.min));
            m.insert("max".into(), json!(n.max));
            m.insert("mean".into(), json!(n.mean));
        }
        if let Some(t) = &c.temporal {
            m.insert("earliest".into(), json!(t.earliest));
            m.insert("latest".into(), json!(t.latest));
        }
        if c.list_valued {
            m.insert("listValued".into(), json!(true));
        }
        m.insert(
            "samples".into(),
            Value::Array(c.samples.iter().take(samples).map(|s| json!(s.value)).collect()),
        );
    }
    Value::Object(m)
}

fn payload(profile: &DatasetProfile, samples: usize, stats: bool) -> Value {
    json!({
        "source": profile.source,
        "rowCount": profile.row_count,
        "columns": profile
            .columns
            .iter()
            .map(|c| column_payload(c, samples, stats))
            .collect::<Vec<_>>(),
    })
}

/// Compact JSON summary for advice prompts, at most `budget` chars long.
/// Sample lists shrink first, then statistics; columns are never dropped.
pub fn summarize_profile(profile: &DatasetProfile, budget: usize) -> Result<Value, ProfileError> {
    for samples in (0..=SAMPLE_COUNT).rev() {
        let p = payload(profile, samples, true);
        if p.to_string().len() <= budget && budget >= MIN_SUMMARY_BUDGET {
            return Ok(p);
        }
    }
    let names_only = payload(profile, 0, false);
    let needed = names_only.to_string().len();
    if needed <= budget && budget >= MIN_SUMMARY_BUDGET {
        return Ok(names_only);
    }
    Err(ProfileError::BudgetTooSmall {
        budget,
        needed: needed.max(MIN_SUMMARY_BUDGET),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(vals: &[&str]) -> Vec<Cell> {
        vals.iter().map(|s| Cell::Text(s.to_string())).collect()
    }

    #[test]
    fn iso_dates_are_temporal() {
        let k = infer_column_kind("date", &text(&["2000-01-01", "2000-02-01"]));
        assert_eq!(k.kind, Kind::Temporal);
    }

    #[test]
    fn two_thirds_numeric_is_nominal() {
        assert_eq!(infer_column_kind("v", &text(&["3.1", "4.0", "x"])).kind, Kind::Nominal);
    }

    #[test]
    fn regions_are_nominal_with_two_distinct() {
        let vals = text(&["Mountain", "Pacific", "Mountain"]);
        assert_eq!(infer_column_kind("division", &vals).kind, Kind::Nominal);
        let t = Table::new(vec!["division".into()], vals.into_iter().map(|c| vec![c]).collect())
            .unwrap();
        assert_eq!(profile_dataset("t", &t).columns[0].distinct_count, 2);
    }

    #[test]
    fn bare_years_need_a_name_hint() {
        let vals = text(&["1999", "2004", "2011"]);
        assert_eq!(infer_column_kind("release_year", &vals).kind, Kind::Temporal);
        assert_eq!(infer_column_kind("runtime", &vals).kind, Kind::Quantitative);
    }

    #[test]
    fn all_null_column_warns() {
        let k = infer_column_kind("x", &[Cell::Null, Cell::Null]);
        assert_eq!(k.kind, Kind::Nominal);
        assert!(k.all_null);
    }

    #[test]
    fn ratings_and_weekdays_are_ordinal() {
        assert_eq!(infer_column_kind("r", &text(&["Low", "high", "medium"])).kind, Kind::Ordinal);
        assert_eq!(infer_column_kind("d", &text(&["Mon", "Tue"])).kind, Kind::Ordinal);
        assert_eq!(infer_column_kind("d", &text(&["Mon", "Tuesday"])).kind, Kind::Nominal);
    }

    #[test]
    fn empty_table_profiles_without_stats() {
        let t = Table::new(vec!["a".into(), "b".into()], vec![]).unwrap();
        let p = profile_dataset("empty", &t);
        assert_eq!(p.row_count, 0);
        for c in &p.columns {
            assert_eq!(c.row_count, 0);
            assert!(c.numeric.is_none() && c.temporal.is_none() && c.samples.is_empty());
        }
    }

    #[test]
    fn samples_rank_by_frequency_then_value() {
        let vals = text(&["b", "a", "c", "b", "a", "d", "e", "f"]);
        let t = Table::new(vec!["x".into()], vals.into_iter().map(|c| vec![c]).collect()).unwrap();
        let p = profile_dataset("t", &t);
        let s: Vec<_> = p.columns[0].samples.iter().map(|s| s.value.as_str()).collect();
        assert_eq!(s, ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn tiny_budget_is_rejected() {
        let cols = (0..200).map(|i| format!("column_{i}")).collect::<Vec<_>>();
        let t = Table::new(cols, vec![]).unwrap();
        let p = profile_dataset("wide", &t);
        assert!(matches!(
            summarize_profile(&p, 600),
            Err(ProfileError::BudgetTooSmall { .. })
        ));
    }
}
