//! A small in-memory evaluator for the supported transform kinds.
//!
//! Used to recompute scale domains and per-panel row counts after a spec
//! has been rewritten for a new dataset.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde_json::Value;

use crate::profiler::temporal;
use crate::profiler::{Cell, ProfileError, Table};
use crate::spec::{
    AggregateField, AggregateOp, ChartSpec, EncodingPath, Predicate, PredicateTest, Transform,
    TransformOp,
};

pub const TIME_UNITS: [&str; 8] = [
    "year",
    "month",
    "date",
    "day",
    "hours",
    "yearmonth",
    "monthdate",
    "yearmonthdate",
];

const DEFAULT_MAXBINS: f64 = 10.0;
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataflowError {
    #[error("transform {index}: unknown field {field:?}")]
    UnknownField { index: usize, field: String },
    #[error("transform {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error(transparent)]
    Table(#[from] ProfileError),
}

/// Evaluates the transforms that feed one view of a chart: the top-level
/// pipeline, followed by the layer's own pipeline when `layer` is given.
pub fn evaluate_view(
    spec: &ChartSpec,
    table: &Table,
    layer: Option<usize>,
) -> Result<Table, DataflowError> {
    let mut out = run_transforms(table, &spec.transforms)?;
    if let Some(l) = layer.and_then(|i| spec.layers.as_ref()?.get(i)) {
        out = run_transforms(&out, &l.transforms)?;
    }
    Ok(out)
}

const AGG_OUTPUT: &str = "__encoded_value";

/// Values an encoding shows: its column in the evaluated view, aggregated
/// per group of the view's discrete channels when the encoding aggregates.
/// `None` when the field does not exist in the evaluated view.
pub fn encoded_values(
    spec: &ChartSpec,
    table: &Table,
    path: &EncodingPath,
) -> Result<Option<Vec<Cell>>, DataflowError> {
    let Some(enc) = spec.encoding(path) else {
        return Ok(None);
    };
    let mut table = evaluate_view(spec, table, path.layer)?;
    let mut field = enc.field.clone();
    if let Some(op) = enc.aggregate {
        if table.column_index(&field).is_none() && op != AggregateOp::Count {
            return Ok(None);
        }
        let groupby: Vec<String> = spec
            .encodings()
            .into_iter()
            .filter(|(p, e)| {
                (p.layer == path.layer || p.top_facet)
                    && p != path
                    && e.aggregate.is_none()
                    && e.kind.is_discrete()
                    && table.column_index(&e.field).is_some()
            })
            .map(|(_, e)| e.field.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let t = Transform::new(TransformOp::Aggregate {
            ops: vec![AggregateField {
                op,
                field: (op != AggregateOp::Count).then(|| field.clone()),
                output: AGG_OUTPUT.into(),
            }],
            groupby,
            join: false,
        });
        table = run_transforms(&table, &[t])?;
        field = AGG_OUTPUT.into();
    }
    Ok(table.column(&field).map(|c| c.cloned().collect()))
}

pub fn run_transforms(table: &Table, transforms: &[Transform]) -> Result<Table, DataflowError> {
    let (mut columns, mut rows) = table.clone().into_parts();
    for (index, t) in transforms.iter().enumerate() {
        let col = |columns: &[String], f: &str| {
            columns
                .iter()
                .position(|c| c == f)
                .ok_or_else(|| DataflowError::UnknownField {
                    index,
                    field: f.to_string(),
                })
        };
        match &t.op {
            TransformOp::Filter(p) => {
                let i = col(&columns, &p.field)?;
                rows.retain(|r| matches_predicate(&r[i], p));
            }
            TransformOp::Calculate { expr, output } => {
                let idx: HashMap<String, usize> = expr
                    .fields()
                    .into_iter()
                    .map(|f| col(&columns, &f).map(|i| (f, i)))
                    .collect::<Result<_, _>>()?;
                let values: Vec<Cell> = rows
                    .iter()
                    .map(|r| {
                        expr.eval(&|f: &str| idx.get(f).and_then(|&i| r[i].as_f64()))
                            .map(Cell::Number)
                            .unwrap_or(Cell::Null)
                    })
                    .collect();
                set_column(&mut columns, &mut rows, output, values);
            }
            TransformOp::TimeUnit {
                unit,
                field,
                output,
            } => {
                let i = col(&columns, field)?;
                let values: Vec<Cell> = rows
                    .iter()
                    .map(|r| {
                        cell_time(&r[i])
                            .and_then(|t| truncate_time(t, unit))
                            .map(|t| Cell::Text(t.format(TIMESTAMP_FORMAT).to_string()))
                            .unwrap_or(Cell::Null)
                    })
                    .collect();
                set_column(&mut columns, &mut rows, output, values);
            }
            TransformOp::Bin {
                field,
                params,
                start,
                end,
                ..
            } => {
                let i = col(&columns, field)?;
                let nums: Vec<Option<f64>> = rows.iter().map(|r| r[i].as_f64()).collect();
                let (lo, hi) = nums.iter().flatten().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &v| (lo.min(v), hi.max(v)),
                );
                let (first, step) = bin_layout(lo, hi, params);
                let mut starts = Vec::with_capacity(rows.len());
                let mut ends = Vec::with_capacity(rows.len());
                for v in nums {
                    match v {
                        Some(v) if lo.is_finite() => {
                            let s = first + ((v - first) / step).floor() * step;
                            starts.push(Cell::Number(s));
                            ends.push(Cell::Number(s + step));
                        }
                        _ => {
                            starts.push(Cell::Null);
                            ends.push(Cell::Null);
                        }
                    }
                }
                set_column(&mut columns, &mut rows, start, starts);
                set_column(&mut columns, &mut rows, end, ends);
            }
            TransformOp::Fold { fields, key, value } => {
                let idx: Vec<usize> = fields
                    .iter()
                    .map(|f| col(&columns, f))
                    .collect::<Result<_, _>>()?;
                let mut new_columns: Vec<String> = columns
                    .iter()
                    .filter(|c| *c != key && *c != value)
                    .cloned()
                    .collect();
                let keep: Vec<usize> = new_columns
                    .iter()
                    .map(|c| columns.iter().position(|o| o == c).unwrap())
                    .collect();
                new_columns.push(key.clone());
                new_columns.push(value.clone());
                let mut new_rows = Vec::with_capacity(rows.len() * fields.len());
                for r in &rows {
                    for (f, &i) in fields.iter().zip(&idx) {
                        let mut nr: Vec<Cell> = keep.iter().map(|&k| r[k].clone()).collect();
                        nr.push(Cell::Text(f.clone()));
                        nr.push(r[i].clone());
                        new_rows.push(nr);
                    }
                }
                columns = new_columns;
                rows = new_rows;
            }
            TransformOp::Aggregate { ops, groupby, join } => {
                let g_idx: Vec<usize> = groupby
                    .iter()
                    .map(|g| col(&columns, g))
                    .collect::<Result<_, _>>()?;
                let op_idx: Vec<Option<usize>> = ops
                    .iter()
                    .map(|o| o.field.as_ref().map(|f| col(&columns, f)).transpose())
                    .collect::<Result<_, _>>()?;
                let mut order: Vec<Vec<String>> = Vec::new();
                let mut groups: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
                for (ri, r) in rows.iter().enumerate() {
                    let key: Vec<String> = g_idx.iter().map(|&i| r[i].to_string()).collect();
                    groups
                        .entry(key.clone())
                        .or_insert_with(|| {
                            order.push(key);
                            Vec::new()
                        })
                        .push(ri);
                }
                let mut results: HashMap<&Vec<String>, Vec<Cell>> = HashMap::new();
                for key in &order {
                    let members = &groups[key];
                    let vals = ops
                        .iter()
                        .zip(&op_idx)
                        .map(|(o, ci)| {
                            let cells: Vec<&Cell> = match ci {
                                Some(ci) => members.iter().map(|&m| &rows[m][*ci]).collect(),
                                None => Vec::new(),
                            };
                            aggregate(o.op, members.len(), &cells)
                        })
                        .collect();
                    results.insert(key, vals);
                }
                if *join {
                    let per_row: Vec<Vec<Cell>> = rows
                        .iter()
                        .map(|r| {
                            let key: Vec<String> =
                                g_idx.iter().map(|&i| r[i].to_string()).collect();
                            results[&key].clone()
                        })
                        .collect();
                    for (k, o) in ops.iter().enumerate() {
                        let values = per_row.iter().map(|v| v[k].clone()).collect();
                        set_column(&mut columns, &mut rows, &o.output, values);
                    }
                } else {
                    let mut new_columns: Vec<String> = groupby.clone();
                    new_columns.extend(ops.iter().map(|o| o.output.clone()));
                    let new_rows = order
                        .iter()
                        .map(|key| {
                            let first = groups[key][0];
                            let mut nr: Vec<Cell> =
                                g_idx.iter().map(|&i| rows[first][i].clone()).collect();
                            nr.extend(results[key].iter().cloned());
                            nr
                        })
                        .collect();
                    // An aggregate with no rows and no group-by still yields one row.
                    let new_rows = if rows.is_empty() && groupby.is_empty() {
                        vec![ops.iter().map(|o| aggregate(o.op, 0, &[])).collect()]
                    } else {
                        new_rows
                    };
                    columns = new_columns;
                    rows = new_rows;
                }
            }
        }
    }
    Table::new(columns, rows).map_err(DataflowError::from)
}

fn set_column(columns: &mut Vec<String>, rows: &mut [Vec<Cell>], name: &str, values: Vec<Cell>) {
    match columns.iter().position(|c| c == name) {
        Some(i) => {
            for (r, v) in rows.iter_mut().zip(values) {
                r[i] = v;
            }
        }
        None => {
            columns.push(name.to_string());
            for (r, v) in rows.iter_mut().zip(values) {
                r.push(v);
            }
        }
    }
}

fn cell_time(c: &Cell) -> Option<NaiveDateTime> {
    temporal::parse_cell(c, true)
}

fn truncate_time(t: NaiveDateTime, unit: &str) -> Option<NaiveDateTime> {
    // Units without a year land in 2012, a leap year, so Feb 29 survives.
    let (y, m, d, h) = match unit {
        "year" => (t.year(), 1, 1, 0),
        "month" => (2012, t.month(), 1, 0),
        "date" => (2012, 1, t.day(), 0),
        "day" => (2012, 1, 1 + t.weekday().num_days_from_sunday(), 0),
        "hours" => (2012, 1, 1, t.hour()),
        "yearmonth" => (t.year(), t.month(), 1, 0),
        "monthdate" => (2012, t.month(), t.day(), 0),
        "yearmonthdate" => (t.year(), t.month(), t.day(), 0),
        _ => return None,
    };
    NaiveDate::from_ymd_opt(y, m, d)?.and_hms_opt(h, 0, 0)
}

/// First bin boundary and step width for values in `[lo, hi]`.
pub fn bin_layout(lo: f64, hi: f64, params: &Value) -> (f64, f64) {
    if let Some(step) = params.get("step").and_then(Value::as_f64).filter(|s| *s > 0.0) {
        return ((lo / step).floor() * step, step);
    }
    let maxbins = params
        .get("maxbins")
        .and_then(Value::as_f64)
        .filter(|m| *m >= 1.0)
        .unwrap_or(DEFAULT_MAXBINS);
    let span = hi - lo;
    if !span.is_finite() || span <= 0.0 {
        let base = if lo.is_finite() { lo.floor() } else { 0.0 };
        return (base, 1.0);
    }
    let level = maxbins.log10().ceil();
    let mut step = 10f64.powf(span.log10().round() - level);
    while (span / step).ceil() > maxbins {
        step *= 10.0;
    }
    for div in [5.0, 2.0] {
        let v = step / div;
        if span / v <= maxbins {
            step = v;
            break;
        }
    }
    ((lo / step).floor() * step, step)
}

fn aggregate(op: AggregateOp, rows: usize, cells: &[&Cell]) -> Cell {
    if op == AggregateOp::Count {
        return Cell::Number(rows as f64);
    }
    let nums: Vec<f64> = cells.iter().filter_map(|c| c.as_f64()).collect();
    let numeric_ok = !nums.is_empty() && nums.len() == cells.iter().filter(|c| !c.is_null()).count();
    match op {
        AggregateOp::Min | AggregateOp::Max if !numeric_ok => {
            let mut times: Vec<(NaiveDateTime, &Cell)> = cells
                .iter()
                .filter_map(|c| cell_time(c).map(|t| (t, *c)))
                .collect();
            times.sort_by_key(|a| a.0);
            let pick = if op == AggregateOp::Min {
                times.first()
            } else {
                times.last()
            };
            pick.map(|(_, c)| (*c).clone()).unwrap_or(Cell::Null)
        }
        _ if nums.is_empty() => Cell::Null,
        AggregateOp::Sum => Cell::Number(nums.iter().sum()),
        AggregateOp::Mean => Cell::Number(nums.iter().sum::<f64>() / nums.len() as f64),
        AggregateOp::Min => Cell::Number(nums.iter().cloned().fold(f64::INFINITY, f64::min)),
        AggregateOp::Max => Cell::Number(nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        AggregateOp::Median => {
            let mut v = nums;
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            let n = v.len();
            Cell::Number(if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            })
        }
        AggregateOp::Count => unreachable!(),
    }
}

fn compare(cell: &Cell, v: &Value) -> Option<Ordering> {
    match v {
        Value::Number(n) => cell.as_f64()?.partial_cmp(&n.as_f64()?),
        Value::String(s) => {
            if let (Some(a), Some(b)) = (cell_time(cell), temporal::parse_text(s, false)) {
                return Some(a.cmp(&b));
            }
            match cell {
                Cell::Text(t) => Some(t.as_str().cmp(s.as_str())),
                _ => None,
            }
        }
        Value::Bool(b) => match cell {
            Cell::Text(t) => (t == &b.to_string()).then_some(Ordering::Equal),
            _ => None,
        },
        _ => None,
    }
}

fn equals(cell: &Cell, v: &Value) -> bool {
    match (cell, v) {
        (Cell::Text(t), Value::String(s)) => t == s,
        _ => compare(cell, v) == Some(Ordering::Equal),
    }
}

pub fn matches_predicate(cell: &Cell, p: &Predicate) -> bool {
    if cell.is_null() {
        return false;
    }
    match &p.test {
        PredicateTest::Equal(v) => equals(cell, v),
        PredicateTest::OneOf(vs) => vs.iter().any(|v| equals(cell, v)),
        PredicateTest::Range(lo, hi) => {
            let above = lo.is_null() || compare(cell, lo).is_some_and(|o| o != Ordering::Less);
            let below = hi.is_null() || compare(cell, hi).is_some_and(|o| o != Ordering::Greater);
            above && below
        }
        PredicateTest::Gt(v) => compare(cell, v) == Some(Ordering::Greater),
        PredicateTest::Gte(v) => compare(cell, v).is_some_and(|o| o != Ordering::Less),
        PredicateTest::Lt(v) => compare(cell, v) == Some(Ordering::Less),
        PredicateTest::Lte(v) => compare(cell, v).is_some_and(|o| o != Ordering::Greater),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::{ingest_table, TableFormat};
    use crate::spec::parse_spec;

    fn weather() -> Table {
        ingest_table(
            b"date,temp,city\n2012-01-03,4,A\n2012-01-20,6,B\n2012-02-11,10,A\n2013-02-01,12,B\n",
            TableFormat::Csv,
        )
        .unwrap()
    }

    fn transforms(json: &str) -> Vec<Transform> {
        let spec = parse_spec(&format!(
            r#"{{"data":{{"url":"w.csv"}},"mark":"point","transform":{json}}}"#
        ))
        .unwrap();
        spec.transforms
    }

    #[test]
    fn timeunit_then_joinaggregate() {
        let t = transforms(
            r#"[{"timeUnit":"month","field":"date","as":"m"},
                {"joinaggregate":[{"op":"mean","field":"temp","as":"mt"}],"groupby":["m"]}]"#,
        );
        let out = run_transforms(&weather(), &t).unwrap();
        assert_eq!(out.row_count(), 4);
        let mt: Vec<f64> = out.column("mt").unwrap().map(|c| c.as_f64().unwrap()).collect();
        assert_eq!(mt, [5.0, 5.0, 11.0, 11.0]);
        let m0 = out.column("m").unwrap().next().unwrap().to_string();
        assert_eq!(m0, "2012-01-01T00:00:00");
    }

    #[test]
    fn blocking_aggregate_keeps_groups_in_first_seen_order() {
        let t = transforms(
            r#"[{"aggregate":[{"op":"sum","field":"temp","as":"s"},{"op":"count","as":"n"}],"groupby":["city"]}]"#,
        );
        let out = run_transforms(&weather(), &t).unwrap();
        assert_eq!(out.columns(), ["city", "s", "n"]);
        assert_eq!(out.rows()[0], vec![Cell::Text("A".into()), Cell::Number(14.0), Cell::Number(2.0)]);
    }

    #[test]
    fn filter_calculate_and_fold() {
        let t = transforms(
            r#"[{"filter":{"field":"date","range":["2012-01-10","2012-12-31"]}},
                {"calculate":"datum.temp * 2","as":"t2"},
                {"fold":["temp","t2"],"as":["k","v"]}]"#,
        );
        let out = run_transforms(&weather(), &t).unwrap();
        assert_eq!(out.row_count(), 4);
        let v: Vec<f64> = out.column("v").unwrap().map(|c| c.as_f64().unwrap()).collect();
        assert_eq!(v, [6.0, 12.0, 10.0, 20.0]);
    }

    #[test]
    fn bins_cover_values() {
        let (first, step) = bin_layout(3.2, 97.0, &Value::Bool(true));
        assert_eq!(step, 10.0);
        assert_eq!(first, 0.0);
        let (first, step) = bin_layout(0.0, 1.0, &serde_json::json!({"maxbins": 4}));
        assert_eq!((first, step), (0.0, 0.5));
    }

    #[test]
    fn unknown_field_reports_transform() {
        let t = transforms(r#"[{"calculate":"datum.nope + 1","as":"x"}]"#);
        let err = run_transforms(&weather(), &t).unwrap_err();
        assert_eq!(
            err,
            DataflowError::UnknownField {
                index: 0,
                field: "nope".into()
            }
        );
    }
}
