use std::collections::{BTreeMap, BTreeSet};

use super::{RewriteError, RewriteLog};
use crate::mapper::substitute::complete_groupby;
use crate::mapper::{Flag, FlagKind};
use crate::profiler::{Cell, Dataset};
use crate::spec::{
    AggregateField, AggregateOp, ChartSpec, Encoding, Extras, Kind, Predicate, PredicateTest,
    Transform, TransformOp,
};

/// Categories kept by `force-filter`.
pub const TOP_N: usize = 20;

fn force_aggregate(view: &mut ChartSpec, op: AggregateOp, facet: Option<&Encoding>) {
    let produced: BTreeSet<String> = view
        .transforms
        .iter()
        .filter(|t| t.is_blocking())
        .flat_map(Transform::outputs)
        .collect();
    let mut groupby: Vec<String> = Vec::new();
    let mut targets: Vec<String> = Vec::new();
    for e in view.encodings.values().chain(facet) {
        if e.aggregate.is_some() {
            continue;
        }
        let list = if e.kind == Kind::Quantitative { &mut targets } else { &mut groupby };
        if !list.contains(&e.field) {
            list.push(e.field.clone());
        }
    }
    if targets.iter().any(|f| produced.contains(f)) {
        return;
    }
    let ops: Vec<AggregateField> = if targets.is_empty() {
        vec![AggregateField {
            op: AggregateOp::Count,
            field: None,
            output: "count".into(),
        }]
    } else {
        targets
            .iter()
            .map(|f| AggregateField {
                op,
                field: Some(f.clone()),
                output: format!("{}_{f}", op.as_str()),
            })
            .collect()
    };
    let renames: BTreeMap<String, String> = ops
        .iter()
        .filter_map(|a| Some((a.field.clone()?, a.output.clone())))
        .collect();
    for e in view.encodings.values_mut() {
        if e.aggregate.is_none() {
            if let Some(n) = renames.get(&e.field) {
                e.field = n.clone();
            }
        }
    }
    view.transforms.push(Transform::new(TransformOp::Aggregate {
        ops,
        groupby,
        join: false,
    }));
}

fn top_values(data: &Dataset, field: &str) -> Vec<Cell> {
    let mut counts: BTreeMap<String, (usize, Cell)> = BTreeMap::new();
    for c in data.table.column(field).into_iter().flatten().filter(|c| !c.is_null()) {
        counts.entry(c.to_string()).or_insert((0, c.clone())).0 += 1;
    }
    let mut ranked: Vec<(String, usize, Cell)> =
        counts.into_iter().map(|(k, (n, c))| (k, n, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().map(|(_, _, c)| c).collect()
}

/// Structural overrides from user flags. `drop-encoding` and `keep-domains`
/// act during planning and scale refresh and are no-ops here.
pub fn apply_flags(
    spec: &ChartSpec,
    flags: &[Flag],
    data: &Dataset,
) -> Result<(ChartSpec, RewriteLog), RewriteError> {
    let mut out = spec.clone();
    for flag in flags {
        match flag.kind {
            FlagKind::ForceAggregate => {
                let op = flag
                    .param
                    .as_deref()
                    .and_then(|p| p.parse().ok())
                    .unwrap_or(AggregateOp::Mean);
                match out.layers.as_mut() {
                    Some(layers) => layers.iter_mut().for_each(|l| force_aggregate(l, op, None)),
                    None => {
                        let facet = out.facet.clone();
                        force_aggregate(&mut out, op, facet.as_ref());
                    }
                }
            }
            FlagKind::ForceFilter => {
                let field = flag.param.clone().unwrap_or_default();
                let already = out.transforms.first().is_some_and(|t| {
                    matches!(&t.op, TransformOp::Filter(p)
                        if p.field == field && matches!(p.test, PredicateTest::OneOf(_)))
                });
                let values = top_values(data, &field);
                if already || values.len() <= TOP_N {
                    continue;
                }
                let keep = values.iter().take(TOP_N).map(Cell::to_json).collect();
                out.transforms.insert(
                    0,
                    Transform::new(TransformOp::Filter(Predicate {
                        field,
                        test: PredicateTest::OneOf(keep),
                        extras: Extras::new(),
                    })),
                );
            }
            FlagKind::FacetBy => {
                let col = flag.param.clone().unwrap_or_default();
                let kind = data
                    .profile
                    .column(&col)
                    .map(|c| c.kind)
                    .ok_or_else(|| RewriteError::MissingField(col.clone()))?;
                if !kind.is_discrete() {
                    return Err(RewriteError::NotDiscrete {
                        column: col,
                        kind: kind.word(),
                    });
                }
                match out.facet.as_mut() {
                    Some(f) => {
                        f.field = col;
                        f.kind = kind;
                    }
                    None => out.facet = Some(Encoding::new(col, kind)),
                }
            }
            FlagKind::DropEncoding | FlagKind::KeepDomains => {}
        }
    }
    complete_groupby(&mut out, &data.profile.column_names().into_iter().collect());
    let mut log = RewriteLog::default();
    log.record(spec, &out);
    Ok((out, log))
}
