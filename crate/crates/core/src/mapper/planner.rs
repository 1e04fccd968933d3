use std::collections::{BTreeMap, BTreeSet};

use super::assign::{assign, ScoreMatrix};
use super::plan::{AssignMode, Assignment, Flag, FlagKind, MappingPlan, PlanError, Provenance};
use super::roles::{primary_steps, view_pipeline};
use super::score::{score_mapping, type_compat, DROP_THRESHOLD};
use super::substitute::rewrite;
use super::{Role, RoleMap};
use crate::advisor::{AdvicePayload, AdviceRequest, Advisor};
use crate::depgraph::{build_graph_lenient, impacted_nodes, stale_nodes};
use crate::profiler::{ColumnProfile, DatasetProfile};
use crate::spec::{
    validate_against, Channel, ChartSpec, Columns, EncodingPath, Kind, SchemaViolation, Transform,
    TransformId,
};

/// Upper bound on finalization rounds; each round only grows the removal
/// and drop sets, so this is never reached on well-formed input.
const MAX_ROUNDS: usize = 64;

/// Final kind of a role's field if its chain were fed a column of
/// `col_kind`, or `None` when some chain transform rejects it.
fn remap_kind(spec: &ChartSpec, role: &Role, col_kind: Kind) -> Option<Kind> {
    if !role.is_derived {
        return None;
    }
    let path = role.paths.first()?;
    let steps = primary_steps(spec, path.layer, &role.current_field)?;
    let mut kind = col_kind;
    for step in &steps {
        let t = spec.transform(&step.transform)?;
        if !t.accepts_input(&step.input, kind) {
            return None;
        }
        let k = kind;
        kind = t.output_kind(&step.output, |f| (f == step.input).then_some(k));
    }
    Some(kind)
}

/// Whether every column the role's transform chain reads exists in the data.
fn chain_resolves(spec: &ChartSpec, role: &Role, profile: &DatasetProfile) -> bool {
    let transforms: Vec<&Transform> = role
        .transform_chain
        .iter()
        .filter_map(|id| spec.transform(id))
        .collect();
    let produced: BTreeSet<String> = transforms.iter().flat_map(|t| t.outputs()).collect();
    transforms
        .iter()
        .flat_map(|t| t.value_inputs())
        .filter(|f| !produced.contains(f))
        .all(|f| profile.column(&f).is_some())
}

fn eligible(role: &Role, col: &ColumnProfile, score: f64) -> bool {
    if col.list_valued {
        return false;
    }
    if role.channel.is_structural() {
        col.kind.is_discrete()
    } else {
        score >= DROP_THRESHOLD
    }
}

/// Same-name assignments for every open role, if the dataset provides all of
/// their source columns with usable kinds.
fn schema_reuse(
    roles: &RoleMap,
    profile: &DatasetProfile,
    fixed: &BTreeMap<Channel, Assignment>,
    bound: &BTreeSet<String>,
) -> Option<BTreeMap<Channel, Assignment>> {
    let mut out = BTreeMap::new();
    for role in roles.roles.iter().filter(|r| !fixed.contains_key(&r.channel)) {
        let slot = role.source_slot.as_ref()?;
        let col = profile.column(slot).filter(|c| !c.list_valued && !bound.contains(slot))?;
        let mode = if role.is_derived {
            remap_kind(&roles.spec, role, col.kind)?;
            AssignMode::Remap
        } else if type_compat(role.kind, col.kind) > 0.0 {
            AssignMode::Direct
        } else {
            return None;
        };
        out.insert(
            role.channel,
            Assignment {
                channel: role.channel,
                old_field: role.current_field.clone(),
                new_field: Some(slot.clone()),
                new_kind: Some(role.kind),
                score: 1.0,
                mode,
            },
        );
    }
    Some(out)
}

fn heuristic_assignments(
    roles: &RoleMap,
    profile: &DatasetProfile,
    flags: &[Flag],
) -> Vec<Assignment> {
    let mut columns: Vec<&ColumnProfile> = profile.columns.iter().collect();
    columns.sort_by(|a, b| a.name.cmp(&b.name));

    let dropped: BTreeSet<Channel> = flags
        .iter()
        .filter(|f| f.kind == FlagKind::DropEncoding)
        .filter_map(|f| f.param.as_deref()?.parse().ok())
        .collect();
    let facet_by = flags
        .iter()
        .find(|f| f.kind == FlagKind::FacetBy)
        .and_then(|f| f.param.clone());

    let mut out: BTreeMap<Channel, Assignment> = BTreeMap::new();
    let mut bound: BTreeSet<String> = BTreeSet::new();
    let mut claimed_slots: BTreeSet<String> = BTreeSet::new();

    for role in &roles.roles {
        if dropped.contains(&role.channel) {
            out.insert(role.channel, Assignment::drop(role.channel, &role.current_field));
        }
    }
    if let (Some(col), Some(role)) = (&facet_by, roles.role(Channel::Facet)) {
        if !out.contains_key(&Channel::Facet) {
            let kind = profile.column(col).map(|c| c.kind);
            out.insert(
                Channel::Facet,
                Assignment {
                    channel: Channel::Facet,
                    old_field: role.current_field.clone(),
                    new_field: Some(col.clone()),
                    new_kind: kind,
                    score: profile.column(col).map_or(0.0, |c| score_mapping(role, c)),
                    mode: AssignMode::Direct,
                },
            );
            bound.insert(col.clone());
        }
    }

    // Derived fields computed from no single column (counts, multi-column
    // expressions) stay as they are while the columns they read exist;
    // otherwise the channel is mapped like any other.
    for role in &roles.roles {
        if !out.contains_key(&role.channel)
            && role.is_derived
            && role.source_slot.is_none()
            && chain_resolves(&roles.spec, role, profile)
        {
            out.insert(
                role.channel,
                Assignment {
                    channel: role.channel,
                    old_field: role.current_field.clone(),
                    new_field: Some(role.current_field.clone()),
                    new_kind: Some(role.kind),
                    score: 1.0,
                    mode: AssignMode::Keep,
                },
            );
        }
    }

    // When the new data still has every source column the spec reads, each
    // channel keeps its column and nothing needs optimizing.
    if let Some(reuse) = schema_reuse(roles, profile, &out, &bound) {
        out.extend(reuse);
        return out.into_values().collect();
    }

    let open: Vec<&Role> = roles.roles.iter().filter(|r| !out.contains_key(&r.channel)).collect();
    let pool: Vec<&ColumnProfile> = columns.into_iter().filter(|c| !bound.contains(&c.name)).collect();
    let matrix: ScoreMatrix = open
        .iter()
        .map(|r| {
            pool.iter()
                .map(|c| {
                    let s = score_mapping(r, c);
                    eligible(r, c, s).then_some(s)
                })
                .collect()
        })
        .collect();
    let picks = assign(&matrix, pool.len());

    for (role, pick) in open.iter().zip(picks) {
        let Some(ci) = pick else {
            out.insert(role.channel, Assignment::drop(role.channel, &role.current_field));
            continue;
        };
        let col = pool[ci];
        let score = score_mapping(role, col);
        let remap = role
            .source_slot
            .as_ref()
            .filter(|slot| role.is_derived && !claimed_slots.contains(*slot))
            .and_then(|_| remap_kind(&roles.spec, role, col.kind));
        let assignment = match remap {
            Some(final_kind) => {
                claimed_slots.insert(role.source_slot.clone().expect("remap has a slot"));
                let kind = if type_compat(role.kind, final_kind) > 0.0 {
                    role.kind
                } else {
                    final_kind
                };
                Assignment {
                    channel: role.channel,
                    old_field: role.current_field.clone(),
                    new_field: Some(col.name.clone()),
                    new_kind: Some(kind),
                    score,
                    mode: AssignMode::Remap,
                }
            }
            None => Assignment {
                channel: role.channel,
                old_field: role.current_field.clone(),
                new_field: Some(col.name.clone()),
                new_kind: Some(col.kind),
                score,
                mode: AssignMode::Direct,
            },
        };
        out.insert(role.channel, assignment);
    }
    out.into_values().collect()
}

fn parse_transform_path(path: &str) -> Option<TransformId> {
    let parts: Vec<&str> = path.split('/').collect();
    match parts.as_slice() {
        ["", "transform", i, ..] => Some(TransformId {
            layer: None,
            index: i.parse().ok()?,
        }),
        ["", "layer", l, "transform", i, ..] => Some(TransformId {
            layer: Some(l.parse().ok()?),
            index: i.parse().ok()?,
        }),
        _ => None,
    }
}

/// Kind-incompatible transforms in the rewritten spec (new ids).
fn incompatible_transforms(spec: &ChartSpec, profile: &DatasetProfile) -> Vec<TransformId> {
    let mut out = BTreeSet::new();
    let mut views = vec![None];
    views.extend((0..spec.layers.as_ref().map_or(0, Vec::len)).map(Some));
    for layer in views {
        let mut kinds: BTreeMap<String, Kind> =
            profile.columns.iter().map(|c| (c.name.clone(), c.kind)).collect();
        for (id, t) in view_pipeline(spec, layer) {
            for input in t.value_inputs() {
                if let Some(k) = kinds.get(&input) {
                    if !t.accepts_input(&input, *k) {
                        out.insert(id);
                    }
                }
            }
            for o in t.outputs() {
                let k = t.output_kind(&o, |f| kinds.get(f).copied());
                kinds.insert(o, k);
            }
        }
    }
    out.into_iter().collect()
}

/// Grows drops and removals until the rewritten spec resolves, has no
/// kind-incompatible transforms and no stale transforms.
fn finalize(roles: &RoleMap, profile: &DatasetProfile, plan: &mut MappingPlan) {
    let columns = Columns::known(profile.column_names());
    for _ in 0..MAX_ROUNDS {
        let (s, survivors) = rewrite(roles, plan, profile);
        let original = |id: &TransformId| survivors.get(id).copied();
        let mut removals: BTreeSet<TransformId> = plan.transforms_to_remove.iter().copied().collect();
        let before = (removals.len(), plan.assignments.iter().filter(|a| a.dropped()).count());

        for v in validate_against(&s, &columns) {
            if let SchemaViolation::UnresolvedField {
                path, in_transform, ..
            } = v
            {
                if in_transform {
                    if let Some(id) = parse_transform_path(&path).and_then(|id| original(&id)) {
                        removals.insert(id);
                    }
                } else if let Ok(p) = path.parse::<EncodingPath>() {
                    drop_channel(plan, p.channel);
                }
            }
        }
        for id in incompatible_transforms(&s, profile) {
            if let Some(o) = original(&id) {
                removals.insert(o);
            }
        }
        let graph = build_graph_lenient(&s);
        let live: BTreeSet<String> = s.encodings().iter().map(|(_, e)| e.field.clone()).collect();
        for id in stale_nodes(&graph, &live).transforms(&graph) {
            if let Some(o) = original(&id) {
                removals.insert(o);
            }
        }

        plan.transforms_to_remove = removals.into_iter().collect();
        let after = (
            plan.transforms_to_remove.len(),
            plan.assignments.iter().filter(|a| a.dropped()).count(),
        );
        if after == before {
            return;
        }
    }
    log::warn!("plan finalization did not converge");
}

fn drop_channel(plan: &mut MappingPlan, channel: Channel) {
    if let Some(a) = plan.assignments.iter_mut().find(|a| a.channel == channel) {
        a.new_field = None;
        a.new_kind = None;
        a.score = 0.0;
        a.mode = AssignMode::Direct;
    }
}

fn annotate(roles: &RoleMap, plan: &mut MappingPlan) {
    let graph = build_graph_lenient(&roles.spec);
    plan.impacts = plan
        .assignments
        .iter()
        .filter(|a| a.new_field.as_deref() != Some(a.old_field.as_str()))
        .filter_map(|a| {
            let nodes = impacted_nodes(&graph, &a.old_field).ok()?;
            Some((a.old_field.clone(), nodes.into_iter().collect()))
        })
        .collect();
}

/// Plans how the new dataset's columns replace the spec's fields.
pub fn plan_mapping(
    roles: &RoleMap,
    profile: &DatasetProfile,
    flags: &[Flag],
    advisor: Option<&dyn Advisor>,
) -> Result<MappingPlan, PlanError> {
    if profile.columns.is_empty() {
        return Err(PlanError::EmptyProfile);
    }
    for f in flags {
        f.validate(roles, profile)?;
    }
    let mut flags: Vec<Flag> = flags.to_vec();
    flags.sort();
    flags.dedup();

    let mut plan = MappingPlan {
        source: profile.source.clone(),
        assignments: heuristic_assignments(roles, profile, &flags),
        transforms_to_remove: Vec::new(),
        transforms_to_add: Vec::new(),
        guide_updates: Vec::new(),
        scale_updates: Vec::new(),
        flags: flags.clone(),
        provenance: Provenance::Heuristic,
        impacts: BTreeMap::new(),
        notes: Vec::new(),
    };

    if let Some(adv) = advisor {
        match advised_plan(adv, roles, profile, &flags) {
            Ok(p) => plan = p,
            Err(reason) => {
                log::warn!("advisor plan rejected, using heuristic plan: {reason}");
                plan.notes.push(format!("advisor fallback: {reason}"));
            }
        }
    }

    finalize(roles, profile, &mut plan);
    annotate(roles, &mut plan);
    Ok(plan)
}

fn advised_plan(
    adv: &dyn Advisor,
    roles: &RoleMap,
    profile: &DatasetProfile,
    flags: &[Flag],
) -> Result<MappingPlan, String> {
    let req = AdviceRequest::mapping(roles, profile, flags);
    let resp = adv.advise(&req).map_err(|e| e.to_string())?;
    let AdvicePayload::Plan(mut p) = resp.payload else {
        return Err("advisor returned a non-plan payload".into());
    };
    let graph = build_graph_lenient(&roles.spec);
    p.validate(roles, &graph, profile).map_err(|e| e.to_string())?;
    let dropped: BTreeSet<Channel> = flags
        .iter()
        .filter(|f| f.kind == FlagKind::DropEncoding)
        .filter_map(|f| f.param.as_deref()?.parse().ok())
        .collect();
    for ch in dropped {
        drop_channel(&mut p, ch);
    }
    for r in &roles.roles {
        if p.assignment(r.channel).is_none() {
            p.assignments.push(Assignment::drop(r.channel, &r.current_field));
        }
    }
    p.assignments.sort_by_key(|a| a.channel);
    p.source = profile.source.clone();
    p.flags = flags.to_vec();
    if resp.backend != "heuristic" {
        p.provenance = Provenance::Advisor;
    }
    Ok(p)
}
