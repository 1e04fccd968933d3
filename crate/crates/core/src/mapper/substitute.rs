//! Pure rewriting stages shared by plan finalization and the rewriter.

use std::collections::{BTreeMap, BTreeSet};

use super::plan::{AssignMode, MappingPlan};
use super::roles::view_pipeline;
use super::RoleMap;
use crate::profiler::DatasetProfile;
use crate::spec::{
    ChartSpec, DataLocation, DataSource, FieldSlot, Transform, TransformId, TransformOp,
};

/// Points the spec at a new data location, keeping any extra data options.
pub(crate) fn replace_data(spec: &mut ChartSpec, source: &str) {
    let extras = spec.data.take().map(|d| d.extras).unwrap_or_default();
    spec.data = Some(DataSource {
        location: DataLocation::Url(source.to_string()),
        extras,
    });
}

/// Replaces the `_`-separated token run `slot` inside `name` with `col`.
pub(crate) fn rename_token(name: &str, slot: &str, col: &str) -> Option<String> {
    if name == slot {
        return Some(col.to_string());
    }
    let parts: Vec<&str> = name.split('_').collect();
    let needle: Vec<&str> = slot.split('_').collect();
    if needle.len() > parts.len() {
        return None;
    }
    let at = (0..=parts.len() - needle.len()).find(|&i| parts[i..i + needle.len()] == needle[..])?;
    let mut out: Vec<&str> = parts[..at].to_vec();
    out.push(col);
    out.extend(&parts[at + needle.len()..]);
    Some(out.join("_"))
}

fn for_each_view(spec: &mut ChartSpec, f: &mut impl FnMut(&mut ChartSpec)) {
    f(spec);
    if let Some(layers) = spec.layers.as_mut() {
        for l in layers {
            f(l);
        }
    }
}

fn rename_everywhere(spec: &mut ChartSpec, map: &BTreeMap<String, String>) {
    if map.is_empty() {
        return;
    }
    let rename = |n: &str| map.get(n).cloned();
    for_each_view(spec, &mut |view: &mut ChartSpec| {
        for t in &mut view.transforms {
            for slot in [FieldSlot::Value, FieldSlot::GroupBy, FieldSlot::Output] {
                t.rename_fields(slot, &rename);
            }
        }
        for e in view.encodings.values_mut().chain(view.facet.as_mut()) {
            if let Some(n) = rename(&e.field) {
                e.field = n;
            }
        }
    });
}

/// Renames applied by the plan's remap assignments: each claimed source
/// column, plus chain outputs whose names embed it.
pub(crate) fn remap_renames(roles: &RoleMap, plan: &MappingPlan) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for a in &plan.assignments {
        let (Some(col), AssignMode::Remap) = (&a.new_field, a.mode) else {
            continue;
        };
        let Some(role) = roles.role(a.channel) else { continue };
        let Some(slot) = &role.source_slot else { continue };
        map.entry(slot.clone()).or_insert_with(|| col.clone());
        for id in &role.transform_chain {
            let Some(t) = roles.spec.transform(id) else { continue };
            for o in t.outputs() {
                if let Some(n) = rename_token(&o, slot, col) {
                    if n != o {
                        map.entry(o).or_insert(n);
                    }
                }
            }
        }
    }
    map.retain(|k, v| k != v);
    map
}

/// Field substitution and kind updates for every assigned channel.
pub(crate) fn substitute_fields(
    spec: &mut ChartSpec,
    roles: &RoleMap,
    plan: &MappingPlan,
    profile: &DatasetProfile,
) {
    let renames = remap_renames(roles, plan);
    rename_everywhere(spec, &renames);

    for a in &plan.assignments {
        let (Some(col), Some(role)) = (&a.new_field, roles.role(a.channel)) else {
            continue;
        };
        if a.mode == AssignMode::Keep {
            continue;
        }
        let kind = a
            .new_kind
            .or_else(|| match a.mode {
                AssignMode::Remap => Some(role.kind),
                AssignMode::Direct => profile.column(col).map(|c| c.kind),
                AssignMode::Keep => None,
            })
            .unwrap_or(role.kind);
        for path in &role.paths {
            if let Some(enc) = spec.encoding_mut(path) {
                if a.mode == AssignMode::Direct {
                    enc.field = col.clone();
                    if enc.aggregate.is_some_and(|op| !op.accepts(kind)) {
                        enc.aggregate = None;
                    }
                }
                enc.kind = kind;
            }
        }
        if a.mode == AssignMode::Direct {
            let old = renames.get(&a.old_field).unwrap_or(&a.old_field).clone();
            for_each_view(spec, &mut |view: &mut ChartSpec| {
                for t in &mut view.transforms {
                    if let TransformOp::Aggregate { groupby, .. } = &mut t.op {
                        if groupby.contains(&old) {
                            let mut next: Vec<String> = Vec::new();
                            for g in groupby.iter() {
                                let g = if *g == old { col.clone() } else { g.clone() };
                                if !next.contains(&g) {
                                    next.push(g);
                                }
                            }
                            *groupby = next;
                        }
                    }
                }
            });
        }
    }
}

/// Deletes every encoding of the dropped channels.
pub(crate) fn drop_channels(spec: &mut ChartSpec, roles: &RoleMap, plan: &MappingPlan) {
    for a in plan.assignments.iter().filter(|a| a.dropped()) {
        if let Some(role) = roles.role(a.channel) {
            for path in &role.paths {
                spec.remove_encoding(path);
            }
        }
    }
}

/// Removes transforms by id; survivors keep their relative order. Returns
/// the original id of every surviving transform, keyed by its new id.
pub(crate) fn remove_transforms(
    spec: &mut ChartSpec,
    ids: &[TransformId],
) -> BTreeMap<TransformId, TransformId> {
    let doomed: BTreeSet<TransformId> = ids.iter().copied().collect();
    let mut survivors = BTreeMap::new();
    let mut prune = |layer: Option<usize>, list: &mut Vec<Transform>| {
        let old = std::mem::take(list);
        for (index, t) in old.into_iter().enumerate() {
            let id = TransformId { layer, index };
            if !doomed.contains(&id) {
                survivors.insert(
                    TransformId {
                        layer,
                        index: list.len(),
                    },
                    id,
                );
                list.push(t);
            }
        }
    };
    prune(None, &mut spec.transforms);
    if let Some(layers) = spec.layers.as_mut() {
        for (i, l) in layers.iter_mut().enumerate() {
            prune(Some(i), &mut l.transforms);
        }
    }
    survivors
}

/// Adds an encoded field to the group-by of the last blocking aggregate in
/// its view when it would otherwise be out of scope.
pub(crate) fn complete_groupby(spec: &mut ChartSpec, columns: &BTreeSet<String>) {
    let mut additions: Vec<(TransformId, String)> = Vec::new();
    let mut views: Vec<Option<usize>> = vec![None];
    views.extend((0..spec.layers.as_ref().map_or(0, Vec::len)).map(Some));
    for layer in views {
        let view = match layer {
            None => &*spec,
            Some(i) => &spec.layers.as_ref().expect("layer index in range")[i],
        };
        let fields: Vec<String> = view
            .encodings
            .values()
            .chain(view.facet.as_ref())
            .map(|e| e.field.clone())
            .collect();
        let pipeline = view_pipeline(spec, layer);
        let Some(k) = pipeline.iter().rposition(|(_, t)| t.is_blocking()) else {
            continue;
        };
        let mut scope: BTreeSet<String> = pipeline[k].1.groupby().iter().cloned().collect();
        for (_, t) in &pipeline[k..] {
            scope.extend(t.outputs());
        }
        let before: BTreeSet<String> = pipeline[..k].iter().flat_map(|(_, t)| t.outputs()).collect();
        for f in fields {
            if !scope.contains(&f) && (columns.contains(&f) || before.contains(&f)) {
                additions.push((pipeline[k].0, f));
            }
        }
    }
    for (id, f) in additions {
        let list = match id.layer {
            None => &mut spec.transforms,
            Some(l) => &mut spec.layers.as_mut().expect("layer index in range")[l].transforms,
        };
        if let TransformOp::Aggregate { groupby, .. } = &mut list[id.index].op {
            if !groupby.contains(&f) {
                groupby.push(f);
            }
        }
    }
}

pub(crate) fn add_transforms(spec: &mut ChartSpec, extra: &[Transform]) {
    spec.transforms.extend(extra.iter().cloned());
}

/// All plan stages in order, without logging.
pub(crate) fn rewrite(
    roles: &RoleMap,
    plan: &MappingPlan,
    profile: &DatasetProfile,
) -> (ChartSpec, BTreeMap<TransformId, TransformId>) {
    let mut s = roles.spec.clone();
    replace_data(&mut s, &plan.source);
    substitute_fields(&mut s, roles, plan, profile);
    drop_channels(&mut s, roles, plan);
    let survivors = remove_transforms(&mut s, &plan.transforms_to_remove);
    add_transforms(&mut s, &plan.transforms_to_add);
    complete_groupby(&mut s, &profile.column_names().into_iter().collect());
    (s, survivors)
}
