//! Applies a mapping plan to a spec, then repairs guides, scales and
//! flag-driven structure. Every stage records its edits.

mod flags;
mod guides;
mod log;
mod scales;

use std::collections::BTreeSet;

pub use flags::{apply_flags, TOP_N};
pub use guides::{humanize, refresh_guides};
pub use log::{Edit, EditKind, ReplayError, RewriteLog};
pub use scales::refresh_scales;

use crate::advisor::{AdvicePayload, AdviceRequest, Advisor};
use crate::dataflow::DataflowError;
use crate::depgraph::{build_graph_lenient, DependencyGraph};
use crate::mapper::substitute;
use crate::mapper::{extract_roles, plan_mapping, Flag, MappingPlan, PlanError, RoleMap};
use crate::profiler::{Dataset, DatasetProfile};
use crate::spec::{
    parse_spec, validate_against, ChartSpec, Columns, Domain,
    EncodingPath, GuideDef, SchemaViolation,
};

#[derive(Debug, thiserror::Error)]
pub enum RewriteError {
    #[error("invalid plan: {0}")]
    Plan(#[from] PlanError),
    #[error("rewritten spec has unresolved fields: {}", .0.join("; "))]
    Unresolved(Vec<String>),
    #[error("cannot evaluate the data pipeline: {0}")]
    Dataflow(#[from] DataflowError),
    #[error("field {0:?} is not available in the new data")]
    MissingField(String),
    #[error("facet-by needs a discrete column, {column:?} is {kind}")]
    NotDiscrete { column: String, kind: &'static str },
    #[error("guide update targets unknown encoding {0:?}")]
    UnknownTarget(String),
}

fn unresolved(spec: &ChartSpec, profile: &DatasetProfile) -> Vec<String> {
    validate_against(spec, &Columns::known(profile.column_names()))
        .into_iter()
        .filter(SchemaViolation::is_unresolved)
        .map(|v| format!("{}: {}", v.path(), v.message()))
        .collect()
}

/// Substitutes fields, drops channels, removes and adds transforms.
pub fn apply_plan(
    spec: &ChartSpec,
    graph: &DependencyGraph,
    plan: &MappingPlan,
    profile: &DatasetProfile,
) -> Result<(ChartSpec, RewriteLog), RewriteError> {
    apply_plan_with_roles(spec, graph, &extract_roles(spec, graph), plan, profile)
}

fn apply_plan_with_roles(
    spec: &ChartSpec,
    graph: &DependencyGraph,
    roles: &RoleMap,
    plan: &MappingPlan,
    profile: &DatasetProfile,
) -> Result<(ChartSpec, RewriteLog), RewriteError> {
    plan.validate(roles, graph, profile)?;
    let mut log = RewriteLog::default();
    let mut cur = spec.clone();
    let mut stage = |log: &mut RewriteLog, f: &mut dyn FnMut(&mut ChartSpec)| {
        let mut next = cur.clone();
        f(&mut next);
        log.record(&cur, &next);
        cur = next;
    };
    stage(&mut log, &mut |s| substitute::replace_data(s, &plan.source));
    stage(&mut log, &mut |s| substitute::substitute_fields(s, roles, plan, profile));
    stage(&mut log, &mut |s| substitute::drop_channels(s, roles, plan));
    stage(&mut log, &mut |s| {
        substitute::remove_transforms(s, &plan.transforms_to_remove);
    });
    stage(&mut log, &mut |s| substitute::add_transforms(s, &plan.transforms_to_add));
    let columns: BTreeSet<String> = profile.column_names().into_iter().collect();
    stage(&mut log, &mut |s| substitute::complete_groupby(s, &columns));

    let problems = unresolved(&cur, profile);
    if !problems.is_empty() {
        return Err(RewriteError::Unresolved(problems));
    }
    Ok((cur, log))
}

/// Applies hand-written or advisor guide and scale updates from the plan.
pub fn apply_updates(
    spec: &ChartSpec,
    plan: &MappingPlan,
) -> Result<(ChartSpec, RewriteLog), RewriteError> {
    let mut out = spec.clone();
    for u in &plan.guide_updates {
        if u.target == "/title" {
            if let (Some(t), Some(text)) = (out.title.as_mut(), &u.new_title) {
                t.text = text.clone();
            }
            continue;
        }
        let path: EncodingPath = u
            .target
            .parse()
            .map_err(|_| RewriteError::UnknownTarget(u.target.clone()))?;
        let enc = out
            .encoding_mut(&path)
            .ok_or_else(|| RewriteError::UnknownTarget(u.target.clone()))?;
        let guide = enc.guide.get_or_insert_with(GuideDef::default);
        guide.visible = true;
        if let Some(t) = &u.new_title {
            guide.title = Some(t.clone());
        }
        if u.remove_format {
            guide.format = None;
        }
        if let Some(f) = &u.new_format {
            guide.format = Some(f.clone());
        }
    }
    for u in &plan.scale_updates {
        let paths: Vec<EncodingPath> = out
            .encodings()
            .into_iter()
            .map(|(p, _)| p)
            .filter(|p| p.channel == u.channel)
            .collect();
        for p in paths {
            let Some(enc) = out.encoding_mut(&p) else { continue };
            let scale = enc.scale.get_or_insert_with(Default::default);
            scale.domain = if u.clears() {
                None
            } else {
                Some(domain_from_value(&u.new_domain))
            };
        }
    }
    let mut log = RewriteLog::default();
    log.record(spec, &out);
    Ok((out, log))
}

fn domain_from_value(v: &serde_json::Value) -> Domain {
    if let Some([lo, hi]) = v.as_array().map(Vec::as_slice) {
        if let (Some(lo), Some(hi)) = (lo.as_f64(), hi.as_f64()) {
            return Domain::Numeric { lo, hi };
        }
    }
    if let Some(items) = v.as_array() {
        if items.iter().all(|i| i.is_string()) {
            return Domain::Categories(
                items.iter().filter_map(|i| i.as_str().map(str::to_string)).collect(),
            );
        }
    }
    Domain::Other(v.clone())
}

/// A finished retargeting: output spec, the plan used, and the full edit log
/// from the input spec.
#[derive(Debug, Clone)]
pub struct Retargeted {
    pub spec: ChartSpec,
    pub roles: RoleMap,
    pub plan: MappingPlan,
    pub log: RewriteLog,
    /// Stages where advisor output was rejected in favour of the heuristic.
    pub fallbacks: Vec<String>,
}

/// Runs the staged pipeline from a spec and a new dataset.
pub fn retarget(
    spec: &ChartSpec,
    data: &Dataset,
    flags: &[Flag],
    advisor: Option<&dyn Advisor>,
) -> Result<Retargeted, RewriteError> {
    let graph = build_graph_lenient(spec);
    let mut fallbacks = Vec::new();
    let mut roles = extract_roles(spec, &graph);
    if let Some(adv) = advisor {
        match adv.advise(&AdviceRequest::roles(spec, &data.profile)) {
            Ok(r) => match r.payload {
                AdvicePayload::Roles(r) => roles = r,
                _ => fallbacks.push("roles: unexpected payload".to_string()),
            },
            Err(e) => fallbacks.push(format!("roles: {e}")),
        }
    }
    let plan = plan_mapping(&roles, &data.profile, flags, advisor)?;
    fallbacks.extend(plan.notes.iter().map(|n| format!("mapping: {n}")));
    apply_mapping_plan(spec, &graph, plan, data, advisor, fallbacks, roles)
}

/// Everything after planning; also used for hand-edited plans.
pub fn retarget_with_plan(
    spec: &ChartSpec,
    data: &Dataset,
    plan: MappingPlan,
) -> Result<Retargeted, RewriteError> {
    let graph = build_graph_lenient(spec);
    let roles = extract_roles(spec, &graph);
    apply_mapping_plan(spec, &graph, plan, data, None, Vec::new(), roles)
}

fn apply_mapping_plan(
    spec: &ChartSpec,
    graph: &DependencyGraph,
    plan: MappingPlan,
    data: &Dataset,
    advisor: Option<&dyn Advisor>,
    mut fallbacks: Vec<String>,
    roles: RoleMap,
) -> Result<Retargeted, RewriteError> {
    let (s, mut log) = apply_plan_with_roles(spec, graph, &roles, &plan, &data.profile)?;
    let (s, l) = apply_flags(&s, &plan.flags, data)?;
    log.extend(l);
    let (s, l) = refresh_guides(&s, spec, &roles, &plan);
    log.extend(l);
    let keep = plan.has_flag(crate::mapper::FlagKind::KeepDomains);
    let (s, l) = refresh_scales(&s, spec, data, keep)?;
    log.extend(l);
    let (mut s, l) = apply_updates(&s, &plan)?;
    log.extend(l);

    if let Some(adv) = advisor {
        match refine(adv, &s, &data.profile, &plan) {
            Ok(refined) => {
                log.record(&s, &refined);
                s = refined;
            }
            Err(reason) => fallbacks.push(format!("refinement: {reason}")),
        }
    }
    Ok(Retargeted {
        spec: s,
        roles,
        plan,
        log,
        fallbacks,
    })
}

/// Advisor refinement, accepted only if it parses and still resolves.
fn refine(
    adv: &dyn Advisor,
    spec: &ChartSpec,
    profile: &DatasetProfile,
    plan: &MappingPlan,
) -> Result<ChartSpec, String> {
    let resp = adv
        .advise(&AdviceRequest::refinement(spec, profile, plan))
        .map_err(|e| e.to_string())?;
    let AdvicePayload::SpecText(text) = resp.payload else {
        return Err("unexpected payload".into());
    };
    let refined = parse_spec(&text).map_err(|e| e.to_string())?;
    let problems = unresolved(&refined, profile);
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    Ok(refined)
}

/// Channels whose encoding reads a different field or kind than in `original`.
pub(crate) fn changed_paths(spec: &ChartSpec, original: &ChartSpec) -> Vec<EncodingPath> {
    spec.encodings()
        .into_iter()
        .filter(|(p, e)| {
            original
                .encoding(p)
                .is_none_or(|o| o.field != e.field || o.kind != e.kind)
        })
        .map(|(p, _)| p)
        .collect()
}
