use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::depgraph::{DependencyGraph, NodeKind};
use crate::profiler::DatasetProfile;
use crate::spec::{ChartSpec, Channel, EncodingPath, Kind, Transform, TransformId};

/// The semantic role one encoding channel plays in a spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Role {
    pub channel: Channel,
    /// Every place the channel is encoded; layers sharing a channel share a role.
    pub paths: Vec<EncodingPath>,
    pub current_field: String,
    pub kind: Kind,
    pub is_derived: bool,
    /// Transforms the encoded value is computed through, in document order.
    pub transform_chain: Vec<TransformId>,
    /// Source column at the root of the chain, when it has a single one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_slot: Option<String>,
    /// Distinct values of the field in the original data, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleSlot {
    pub pointer: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleMap {
    /// Sorted by channel name.
    pub roles: Vec<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_slot: Option<String>,
    #[serde(default)]
    pub title_slots: Vec<TitleSlot>,
    #[serde(skip)]
    pub(crate) spec: ChartSpec,
}

impl RoleMap {
    pub fn role(&self, channel: Channel) -> Option<&Role> {
        self.roles.iter().find(|r| r.channel == channel)
    }

    pub fn spec(&self) -> &ChartSpec {
        &self.spec
    }

    /// Fills role cardinalities from a profile of the spec's original data.
    pub fn with_source_profile(mut self, profile: &DatasetProfile) -> Self {
        for r in &mut self.roles {
            let name = if r.is_derived {
                None
            } else {
                Some(r.current_field.as_str())
            };
            r.cardinality = name
                .and_then(|n| profile.column(n))
                .map(|c| c.distinct_count);
        }
        self
    }

    /// Re-attaches the spec to a role map read from elsewhere and checks that
    /// it describes exactly that spec's channels.
    pub fn attach(mut self, spec: &ChartSpec) -> Result<RoleMap, String> {
        let expected: BTreeSet<Channel> = spec.encodings().iter().map(|(p, _)| p.channel).collect();
        let mut seen = BTreeSet::new();
        for r in &self.roles {
            if !seen.insert(r.channel) {
                return Err(format!("channel {} appears twice", r.channel));
            }
            for p in &r.paths {
                match spec.encoding(p) {
                    Some(e) if p.channel == r.channel && e.field == r.current_field => {}
                    _ => return Err(format!("role {} does not match {}", r.channel, p.pointer())),
                }
            }
            if r.paths.is_empty() {
                return Err(format!("role {} has no encoding paths", r.channel));
            }
            for t in &r.transform_chain {
                if spec.transform(t).is_none() {
                    return Err(format!("role {} names unknown transform {t}", r.channel));
                }
            }
        }
        if seen != expected {
            return Err("roles do not cover the spec's channels exactly".into());
        }
        self.roles.sort_by_key(|r| r.channel);
        self.spec = spec.clone();
        Ok(self)
    }
}

/// The transforms visible to a view, in execution order.
pub(crate) fn view_pipeline(spec: &ChartSpec, layer: Option<usize>) -> Vec<(TransformId, &Transform)> {
    let mut out: Vec<(TransformId, &Transform)> = spec
        .transforms
        .iter()
        .enumerate()
        .map(|(index, t)| (TransformId { layer: None, index }, t))
        .collect();
    if let Some(l) = layer.and_then(|i| spec.layers.as_ref()?.get(i)) {
        out.extend(l.transforms.iter().enumerate().map(|(index, t)| {
            (
                TransformId {
                    layer,
                    index,
                },
                t,
            )
        }));
    }
    out
}

/// Index within `pipeline[..before]` of the last transform producing `field`.
fn producer(pipeline: &[(TransformId, &Transform)], before: usize, field: &str) -> Option<usize> {
    pipeline[..before]
        .iter()
        .rposition(|(_, t)| t.outputs().iter().any(|o| o == field))
}

/// One link of a primary-input chain: `transform` computes `output` from `input`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Step {
    pub transform: TransformId,
    pub input: String,
    pub output: String,
}

/// The primary-input chain behind `field` in a view, from the source column
/// up to the field itself. Empty for source columns; `None` when the chain
/// does not reduce to a single source column.
pub(crate) fn primary_steps(spec: &ChartSpec, layer: Option<usize>, field: &str) -> Option<Vec<Step>> {
    let pipeline = view_pipeline(spec, layer);
    let mut steps = Vec::new();
    let mut cur = (pipeline.len(), field.to_string());
    while let Some(p) = producer(&pipeline, cur.0, &cur.1) {
        let input = pipeline[p].1.primary_input(&cur.1)?;
        steps.push(Step {
            transform: pipeline[p].0,
            input: input.clone(),
            output: cur.1.clone(),
        });
        cur = (p, input);
    }
    steps.reverse();
    Some(steps)
}

struct Trace {
    chain: BTreeSet<TransformId>,
    slot: Option<String>,
    derived: bool,
}

fn trace(spec: &ChartSpec, path: &EncodingPath, field: &str) -> Trace {
    let pipeline = view_pipeline(spec, path.layer);
    let mut chain = BTreeSet::new();
    let mut stack: Vec<(usize, String)> = vec![(pipeline.len(), field.to_string())];
    while let Some((before, f)) = stack.pop() {
        if let Some(p) = producer(&pipeline, before, &f) {
            if chain.insert(pipeline[p].0) {
                for input in pipeline[p].1.value_inputs() {
                    stack.push((p, input));
                }
            }
        }
    }

    // Follow single primary inputs back to a source column.
    let mut slot = None;
    let mut cur = (pipeline.len(), field.to_string());
    loop {
        match producer(&pipeline, cur.0, &cur.1) {
            None => {
                slot = Some(cur.1);
                break;
            }
            Some(p) => match pipeline[p].1.primary_input(&cur.1) {
                Some(input) => cur = (p, input),
                None => break,
            },
        }
    }
    Trace {
        derived: producer(&pipeline, pipeline.len(), field).is_some(),
        chain,
        slot,
    }
}

/// One role per channel, with the transform chain behind its field.
pub fn extract_roles(spec: &ChartSpec, graph: &DependencyGraph) -> RoleMap {
    let mut roles: Vec<Role> = Vec::new();
    for (path, enc) in spec.encodings() {
        let t = trace(spec, &path, &enc.field);
        // The graph and the trace agree on whether the field is derived;
        // prefer the graph when it knows the encoding.
        let derived = graph
            .predecessors(&DependencyGraph::encoding_node_id(&path))
            .filter_map(|e| graph.node(&e.from))
            .find(|n| n.kind.is_field())
            .map(|n| n.kind == NodeKind::DerivedField)
            .unwrap_or(t.derived);
        match roles.iter_mut().find(|r| r.channel == path.channel) {
            Some(r) => {
                r.paths.push(path);
                r.is_derived |= derived;
                let mut chain: BTreeSet<TransformId> = r.transform_chain.iter().copied().collect();
                chain.extend(t.chain);
                r.transform_chain = chain.into_iter().collect();
                if r.source_slot.is_none() && enc.field == r.current_field {
                    r.source_slot = t.slot;
                }
            }
            None => roles.push(Role {
                channel: path.channel,
                paths: vec![path],
                current_field: enc.field.clone(),
                kind: enc.kind,
                is_derived: derived,
                transform_chain: t.chain.into_iter().collect(),
                source_slot: t.slot,
                cardinality: None,
            }),
        }
    }
    roles.sort_by_key(|r| r.channel);

    let mut title_slots = Vec::new();
    if let Some(t) = &spec.title {
        title_slots.push(TitleSlot {
            pointer: "/title".into(),
            text: t.text.clone(),
        });
    }
    for (path, enc) in spec.encodings() {
        if let (Some(g), Some(key)) = (&enc.guide, path.channel.guide_key()) {
            if let Some(text) = &g.title {
                let key = if path.top_facet { "header" } else { key };
                title_slots.push(TitleSlot {
                    pointer: format!("{}/{key}/title", path.pointer()),
                    text: text.clone(),
                });
            }
        }
    }

    RoleMap {
        roles,
        data_slot: spec.data.as_ref().and_then(|d| match &d.location {
            crate::spec::DataLocation::Url(u) => Some(u.clone()),
            crate::spec::DataLocation::Inline(_) => None,
        }),
        title_slots,
        spec: spec.clone(),
    }
}
