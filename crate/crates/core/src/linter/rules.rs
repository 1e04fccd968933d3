use std::collections::{BTreeMap, BTreeSet};

use super::{Code, Finding, LintOptions, DOMAIN_TOLERANCE};
use crate::dataflow::{encoded_values, evaluate_view};
use crate::mapper::{name_tokens, type_compat};
use crate::profiler::{Cell, DatasetProfile, Table};
use crate::spec::{
    is_temporal_format, validate_against, ChartSpec, Columns, Domain, Encoding, EncodingPath, Kind,
    SchemaViolation, Transform,
};

struct Ctx<'a> {
    spec: &'a ChartSpec,
    profile: &'a DatasetProfile,
    table: &'a Table,
    options: &'a LintOptions,
    out: Vec<Finding>,
}

impl Ctx<'_> {
    fn push(&mut self, code: Code, path: String, message: String) {
        self.push_sized(code, path, message, None);
    }

    fn push_sized(&mut self, code: Code, path: String, message: String, magnitude: Option<f64>) {
        let severity = self
            .options
            .severity(code, magnitude)
            .expect("rules supply magnitudes where needed");
        self.out.push(Finding {
            code,
            axis: code.axis(),
            severity,
            path,
            message,
        });
    }
}

/// One renderable view: the top level, or one layer.
struct View<'a> {
    layer: Option<usize>,
    mark: Option<&'a str>,
    encodings: Vec<(EncodingPath, &'a Encoding)>,
    /// Kinds of every field the view can see, columns and derived alike.
    kinds: BTreeMap<String, Kind>,
}

fn views<'a>(spec: &'a ChartSpec, profile: &DatasetProfile) -> Vec<View<'a>> {
    let mut base: BTreeMap<String, Kind> =
        profile.columns.iter().map(|c| (c.name.clone(), c.kind)).collect();
    derive_kinds(&spec.transforms, &mut base);
    let all = spec.encodings();
    let mut out = Vec::new();
    match &spec.layers {
        Some(layers) => {
            for (i, l) in layers.iter().enumerate() {
                let mut kinds = base.clone();
                derive_kinds(&l.transforms, &mut kinds);
                out.push(View {
                    layer: Some(i),
                    mark: l.mark.as_ref().map(|m| m.mark_type.as_str()),
                    encodings: all
                        .iter()
                        .filter(|(p, _)| p.layer == Some(i) || p.top_facet)
                        .cloned()
                        .collect(),
                    kinds,
                });
            }
        }
        None => out.push(View {
            layer: None,
            mark: spec.mark.as_ref().map(|m| m.mark_type.as_str()),
            encodings: all.into_iter().filter(|(p, _)| p.layer.is_none()).collect(),
            kinds: base,
        }),
    }
    out
}

fn derive_kinds(transforms: &[Transform], kinds: &mut BTreeMap<String, Kind>) {
    for t in transforms {
        let snapshot = kinds.clone();
        for o in t.outputs() {
            kinds.insert(o.clone(), t.output_kind(&o, |f| snapshot.get(f).copied()));
        }
    }
}

pub(super) fn run(
    spec: &ChartSpec,
    profile: &DatasetProfile,
    table: &Table,
    options: &LintOptions,
) -> Vec<Finding> {
    let mut cx = Ctx {
        spec,
        profile,
        table,
        options,
        out: Vec::new(),
    };
    schema(&mut cx);
    transform_kinds(&mut cx);
    let views = views(spec, profile);
    for v in &views {
        for (path, enc) in &v.encodings {
            channel_kind(&mut cx, v, path, enc);
            array_cells(&mut cx, path, enc);
            stale_format(&mut cx, path, enc);
        }
        legends(&mut cx, v);
        overplot(&mut cx, v);
    }
    let mut seen = BTreeSet::new();
    for (path, enc) in spec.encodings() {
        if seen.insert(path.pointer()) {
            domain_extent(&mut cx, &path, enc);
        }
    }
    stale_titles(&mut cx);
    cx.out
}

fn schema(cx: &mut Ctx) {
    let columns = Columns::known(cx.profile.column_names());
    for v in validate_against(cx.spec, &columns) {
        let code = match &v {
            SchemaViolation::UnresolvedField { in_transform: true, .. } => Code::SynStaleRef,
            SchemaViolation::UnresolvedField { .. } => Code::SynUnresolved,
            SchemaViolation::FormatKindMismatch { .. } => Code::SynKindMismatch,
            _ => Code::SynSchema,
        };
        cx.push(code, v.path().to_string(), v.message());
    }
}

/// Transforms fed a field of a kind they cannot process, such as a time
/// unit over a text column.
fn transform_kinds(cx: &mut Ctx) {
    let mut kinds: BTreeMap<String, Kind> =
        cx.profile.columns.iter().map(|c| (c.name.clone(), c.kind)).collect();
    let spec = cx.spec;
    check_pipeline(cx, "", &spec.transforms, &mut kinds);
    for (i, l) in spec.layers.iter().flatten().enumerate() {
        check_pipeline(cx, &format!("/layer/{i}"), &l.transforms, &mut kinds.clone());
    }
}

fn check_pipeline(cx: &mut Ctx, prefix: &str, transforms: &[Transform], kinds: &mut BTreeMap<String, Kind>) {
    for (i, t) in transforms.iter().enumerate() {
        for input in t.value_inputs() {
            if let Some(&k) = kinds.get(&input) {
                if !t.accepts_input(&input, k) {
                    cx.push(
                        Code::SynKindMismatch,
                        format!("{prefix}/transform/{i}"),
                        format!("{} transform cannot take {} field {input:?}", t.kind().as_str(), k.word()),
                    );
                }
            }
        }
        derive_kinds(std::slice::from_ref(t), kinds);
    }
}

/// Continuous channel types over fields that cannot be continuous, and
/// aggregates that do not apply to the field's kind.
fn channel_kind(cx: &mut Ctx, v: &View, path: &EncodingPath, enc: &Encoding) {
    let Some(&field_kind) = v.kinds.get(&enc.field) else {
        return;
    };
    let pointer = path.pointer();
    if let Some(op) = enc.aggregate {
        if !op.accepts(field_kind) {
            cx.push(
                Code::SemKindChannel,
                format!("{pointer}/aggregate"),
                format!("{} of {} field {:?}", op.as_str(), field_kind.word(), enc.field),
            );
        }
        return;
    }
    if !enc.kind.is_discrete() && type_compat(enc.kind, field_kind) == 0.0 {
        cx.push(
            Code::SemKindChannel,
            format!("{pointer}/type"),
            format!("{} channel over {} field {:?}", enc.kind.word(), field_kind.word(), enc.field),
        );
    }
}

fn array_cells(cx: &mut Ctx, path: &EncodingPath, enc: &Encoding) {
    if cx.profile.column(&enc.field).is_some_and(|c| c.list_valued) {
        cx.push(
            Code::SemArrayCell,
            format!("{}/field", path.pointer()),
            format!("field {:?} holds lists; unpack it before encoding", enc.field),
        );
    }
}

fn year(s: &str) -> Option<i32> {
    s.get(..4)?.parse().ok()
}

/// Formats that still compile but mislabel the new data: a month or day
/// format over several years, a year-only format within one year, or a
/// number format over text.
fn stale_format(cx: &mut Ctx, path: &EncodingPath, enc: &Encoding) {
    let Some(format) = enc.guide.as_ref().and_then(|g| g.format.as_deref()) else {
        return;
    };
    let Some(col) = cx.profile.column(&enc.field) else {
        return;
    };
    let key = path.channel.guide_key().unwrap_or("axis");
    let pointer = format!("{}/{key}/format", path.pointer());
    if is_temporal_format(format) {
        let Some(ext) = &col.temporal else { return };
        let (Some(a), Some(b)) = (year(&ext.earliest), year(&ext.latest)) else {
            return;
        };
        let shows_year = format.contains("%Y") || format.contains("%y");
        let year_only = format
            .split('%')
            .skip(1)
            .all(|d| d.starts_with('Y') || d.starts_with('y'));
        if !shows_year && a != b {
            cx.push(
                Code::PragStaleFormat,
                pointer,
                format!("format {format:?} hides the year but {:?} spans {a}–{b}", enc.field),
            );
        } else if year_only && a == b {
            cx.push(
                Code::PragStaleFormat,
                pointer,
                format!("format {format:?} shows only the year but {:?} lies within {a}", enc.field),
            );
        }
    } else if col.kind == Kind::Nominal && col.numeric.is_none() && enc.kind == Kind::Nominal {
        cx.push(
            Code::PragStaleFormat,
            pointer,
            format!("number format {format:?} on text field {:?}", enc.field),
        );
    }
}

/// Legend channels with the legend hidden, unless a position channel of the
/// same view already shows the field.
fn legends(cx: &mut Ctx, v: &View) {
    let positional: BTreeSet<&str> = v
        .encodings
        .iter()
        .filter(|(p, _)| p.channel.is_positional())
        .map(|(_, e)| e.field.as_str())
        .collect();
    for (path, enc) in &v.encodings {
        if path.channel.has_legend() && !enc.guide_visible() && !positional.contains(enc.field.as_str()) {
            cx.push(
                Code::PragNoLegend,
                format!("{}/legend", path.pointer()),
                format!("{} encodes {:?} without a legend", path.channel, enc.field),
            );
        }
    }
}

fn distinct<'a>(cells: impl Iterator<Item = &'a Cell>) -> usize {
    cells.map(Cell::to_string).collect::<BTreeSet<_>>().len()
}

fn overplot(cx: &mut Ctx, v: &View) {
    let threshold = match v.mark {
        Some("point" | "circle" | "square") => cx.options.overplot_points,
        Some("line" | "area" | "trail") => cx.options.overplot_lines,
        _ => return,
    };
    let Ok(table) = evaluate_view(cx.spec, cx.table, v.layer) else {
        return;
    };
    let aggregated = v.encodings.iter().any(|(p, e)| !p.top_facet && e.aggregate.is_some());
    let rows = if aggregated {
        let keys: Vec<usize> = v
            .encodings
            .iter()
            .filter(|(_, e)| e.aggregate.is_none())
            .filter_map(|(_, e)| table.column_index(&e.field))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        table
            .rows()
            .iter()
            .map(|r| keys.iter().map(|&k| r[k].to_string()).collect::<Vec<_>>())
            .collect::<BTreeSet<_>>()
            .len()
    } else {
        table.row_count()
    };
    let panels: usize = v
        .encodings
        .iter()
        .filter(|(p, _)| p.channel.is_structural())
        .filter_map(|(_, e)| table.column(&e.field).map(distinct))
        .map(|n| n.max(1))
        .product();
    let marks = rows as f64 / panels.max(1) as f64;
    if marks > threshold as f64 {
        let scaled = marks * cx.options.overplot_points as f64 / threshold as f64;
        let prefix = v.layer.map(|l| format!("/layer/{l}")).unwrap_or_default();
        cx.push_sized(
            Code::PragOverplot,
            format!("{prefix}/mark"),
            format!("about {marks:.0} {} marks per panel (limit {threshold})", v.mark.unwrap_or("?")),
            Some(scaled),
        );
    }
}

/// Literal domains that leave part of the shown data outside the scale.
fn domain_extent(cx: &mut Ctx, path: &EncodingPath, enc: &Encoding) {
    let Some(domain) = enc.scale.as_ref().and_then(|s| s.domain.as_ref()) else {
        return;
    };
    let pointer = format!("{}/scale/domain", path.pointer());
    match (domain, enc.kind) {
        (Domain::Numeric { lo, hi }, Kind::Quantitative) => {
            let Ok(Some(values)) = encoded_values(cx.spec, cx.table, path) else {
                return;
            };
            let nums: Vec<f64> = values.iter().filter_map(Cell::as_f64).collect();
            if nums.is_empty() {
                return;
            }
            let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = (lo.min(*hi), lo.max(*hi));
            let tol = DOMAIN_TOLERANCE * (hi - lo);
            if min < lo - tol || max > hi + tol {
                cx.push(
                    Code::SemDomainExtent,
                    pointer,
                    format!("domain [{lo}, {hi}] does not cover data extent [{min}, {max}]"),
                );
            }
        }
        (Domain::Categories(cats), Kind::Nominal | Kind::Ordinal) => {
            let Ok(Some(values)) = encoded_values(cx.spec, cx.table, path) else {
                return;
            };
            let known: BTreeSet<&str> = cats.iter().map(String::as_str).collect();
            let missing: BTreeSet<String> = values
                .iter()
                .filter(|c| !c.is_null())
                .map(Cell::to_string)
                .filter(|s| !known.contains(s.as_str()))
                .collect();
            if !missing.is_empty() {
                let shown: Vec<&str> = missing.iter().take(3).map(String::as_str).collect();
                cx.push(
                    Code::SemDomainExtent,
                    pointer,
                    format!("{} values missing from the domain, e.g. {}", missing.len(), shown.join(", ")),
                );
            }
        }
        _ => {}
    }
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Titles that still name columns of the previous dataset.
fn stale_titles(cx: &mut Ctx) {
    let current: Vec<Vec<String>> = cx.profile.columns.iter().map(|c| name_tokens(&c.name)).collect();
    let stale: Vec<(String, Vec<String>)> = cx
        .options
        .previous_columns
        .iter()
        .filter(|c| cx.profile.column(c).is_none())
        .map(|c| (c.clone(), name_tokens(c)))
        .filter(|(_, t)| !current.iter().any(|cur| contains_run(cur, t)))
        .collect();
    if stale.is_empty() {
        return;
    }
    let mut titles: Vec<(String, String)> = Vec::new();
    if let Some(t) = &cx.spec.title {
        titles.push(("/title".into(), t.text.clone()));
    }
    for (path, enc) in cx.spec.encodings() {
        if let Some(t) = enc.guide.as_ref().and_then(|g| g.title.as_ref()) {
            let key = path.channel.guide_key().unwrap_or("axis");
            titles.push((format!("{}/{key}/title", path.pointer()), t.clone()));
        }
    }
    for (path, text) in titles {
        let words = name_tokens(&text);
        for (col, toks) in &stale {
            if contains_run(&words, toks) {
                cx.push(
                    Code::SemStaleTitle,
                    path.clone(),
                    format!("title {text:?} names {col:?}, which the data no longer has"),
                );
            }
        }
    }
}
