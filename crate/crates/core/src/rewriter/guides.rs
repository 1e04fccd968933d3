use super::{changed_paths, RewriteLog};
use crate::mapper::substitute::remap_renames;
use crate::mapper::{name_tokens, AssignMode, MappingPlan, RoleMap};
use crate::spec::{format_compatible, Channel, ChartSpec, EncodingPath};

/// `mean_unemployment` → `Mean Unemployment`.
pub fn humanize(name: &str) -> String {
    name_tokens(name)
        .iter()
        .map(|t| {
            let mut c = t.chars();
            match c.next() {
                Some(first) => first.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

type Replacements = Vec<(Vec<String>, String)>;

/// Old-name token runs and their humanized replacements, longest first.
/// Pairs from `channel`'s own assignment win over other channels' pairs
/// for the same old name.
fn replacements(roles: &RoleMap, plan: &MappingPlan, channel: Option<Channel>) -> Replacements {
    let renames = remap_renames(roles, plan);
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut ordered: Vec<_> = plan.assignments.iter().collect();
    ordered.sort_by_key(|a| Some(a.channel) != channel);
    for a in ordered {
        let Some(col) = &a.new_field else { continue };
        match a.mode {
            AssignMode::Keep => {}
            AssignMode::Direct => pairs.push((a.old_field.clone(), col.clone())),
            AssignMode::Remap => {
                if let Some(n) = renames.get(&a.old_field) {
                    pairs.push((a.old_field.clone(), n.clone()));
                }
                if let Some(slot) = roles.role(a.channel).and_then(|r| r.source_slot.clone()) {
                    pairs.push((slot, col.clone()));
                }
            }
        }
    }
    let mut out: Replacements = pairs
        .into_iter()
        .filter(|(o, n)| o != n)
        .map(|(o, n)| (name_tokens(&o), humanize(&n)))
        .filter(|(o, _)| !o.is_empty())
        .collect();
    // Stable: among equal lengths the channel's own pairs stay first.
    out.sort_by_key(|b| std::cmp::Reverse(b.0.len()));
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|(o, _)| seen.insert(o.clone()));
    out
}

/// Word spans of a title as (start, end, lowercase word).
fn words(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i, text[s..i].to_lowercase()));
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn contains_at(hay: &[String], needle: &[String], at: usize) -> bool {
    hay.len() >= at + needle.len() && hay[at..at + needle.len()] == *needle
}

/// Replaces each run of old-field tokens with the humanized new name, unless
/// the run already sits inside an occurrence of the new name.
fn rewrite_title(text: &str, reps: &[(Vec<String>, String)]) -> String {
    let mut text = text.to_string();
    for (old, new) in reps {
        let new_tokens = name_tokens(new);
        let mut from = 0;
        loop {
            let w = words(&text);
            let toks: Vec<String> = w.iter().map(|x| x.2.clone()).collect();
            let hit = (from..toks.len()).find(|&i| {
                contains_at(&toks, old, i)
                    && !(0..=i).any(|j| {
                        contains_at(&toks, &new_tokens, j) && j + new_tokens.len() >= i + old.len()
                    })
            });
            let Some(i) = hit else { break };
            let (s, e) = (w[i].0, w[i + old.len() - 1].1);
            text.replace_range(s..e, new);
            from = i + new_tokens.len().max(1);
        }
    }
    text
}

/// Rewrites titles naming replaced fields, removes formats that no longer
/// fit the field kind, and shows legends for changed color/size/shape
/// channels whose field is not already on a position axis.
pub fn refresh_guides(
    spec: &ChartSpec,
    original: &ChartSpec,
    roles: &RoleMap,
    plan: &MappingPlan,
) -> (ChartSpec, RewriteLog) {
    let mut out = spec.clone();

    if let Some(t) = out.title.as_mut() {
        t.text = rewrite_title(&t.text, &replacements(roles, plan, None));
    }
    let paths: Vec<EncodingPath> = out.encodings().into_iter().map(|(p, _)| p).collect();
    let changed = changed_paths(spec, original);
    for path in &paths {
        let positional: Vec<String> = out
            .encodings()
            .into_iter()
            .filter(|(p, _)| p.layer == path.layer && p.channel.is_positional())
            .map(|(_, e)| e.field.clone())
            .collect();
        let enc = out.encoding_mut(path).expect("path from encodings()");
        if let Some(g) = enc.guide.as_mut() {
            if let Some(t) = g.title.as_mut() {
                *t = rewrite_title(t, &replacements(roles, plan, Some(path.channel)));
            }
            if g.format.as_deref().is_some_and(|f| !format_compatible(f, enc.kind)) {
                g.format = None;
                if g.visible && g.is_bare() {
                    enc.guide = None;
                }
            }
        }
        let hidden = enc.guide.as_ref().is_some_and(|g| !g.visible);
        if hidden
            && path.channel.has_legend()
            && changed.contains(path)
            && !positional.contains(&enc.field)
        {
            let g = enc.guide.as_mut().expect("hidden guide exists");
            g.visible = true;
            if g.is_bare() {
                enc.guide = None;
            }
        }
    }
    let mut log = RewriteLog::default();
    log.record(spec, &out);
    (out, log)
}
