use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DependencyGraph, NodeKind, Relation};
use crate::spec::{TransformId, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StaleReason {
    /// Nothing live consumes the node, directly or transitively.
    Unreferenced,
    /// The node reads a field that is itself stale.
    UpstreamRemoved,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaleSet {
    pub reasons: BTreeMap<String, StaleReason>,
}

impl StaleSet {
    pub fn is_empty(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn len(&self) -> usize {
        self.reasons.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.reasons.contains_key(id)
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.reasons.keys().cloned().collect()
    }

    /// Stale transforms in document order.
    pub fn transforms(&self, graph: &DependencyGraph) -> Vec<TransformId> {
        let mut out: Vec<TransformId> = graph
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::Transform && self.contains(&n.id))
            .filter_map(|n| n.name.parse().ok())
            .collect();
        out.sort();
        out
    }
}

/// Mark-and-sweep over field and transform nodes.
///
/// Every field or transform from which a live field can be reached is kept.
/// Filters have no outputs and are never reached this way; a filter is stale
/// only when it reads a stale derived field, and a live filter keeps its
/// inputs alive.
pub fn stale_nodes(graph: &DependencyGraph, live_fields: &BTreeSet<String>) -> StaleSet {
    let dataflow = |kind: NodeKind| kind.is_field() || kind == NodeKind::Transform;
    let mut marked: BTreeSet<String> = BTreeSet::new();
    let mut stack: Vec<String> = graph
        .nodes()
        .iter()
        .filter(|n| n.kind.is_field() && live_fields.contains(&n.name))
        .map(|n| n.id.clone())
        .collect();

    let sweep = |stack: &mut Vec<String>, marked: &mut BTreeSet<String>| {
        while let Some(id) = stack.pop() {
            if !marked.insert(id.clone()) {
                continue;
            }
            for e in graph.predecessors(&id) {
                if e.relation != Relation::Attaches
                    && graph.node(&e.from).is_some_and(|n| dataflow(n.kind))
                    && !marked.contains(&e.from)
                {
                    stack.push(e.from.clone());
                }
            }
        }
    };
    sweep(&mut stack, &mut marked);

    let is_filter = |id: &str| {
        graph
            .node(id)
            .is_some_and(|n| n.kind == NodeKind::Transform && n.op == Some(TransformKind::Filter))
    };
    // Filters judged against the field marking from encodings alone.
    let mut stale_filters = BTreeSet::new();
    for n in graph.nodes().iter().filter(|n| is_filter(&n.id)) {
        let reads_stale = graph.predecessors(&n.id).any(|e| {
            e.relation == Relation::Consumes
                && !marked.contains(&e.from)
                && graph.node(&e.from).is_some_and(|f| f.kind == NodeKind::DerivedField)
        });
        if reads_stale {
            stale_filters.insert(n.id.clone());
        } else {
            stack.push(n.id.clone());
        }
    }
    sweep(&mut stack, &mut marked);

    let mut out = StaleSet::default();
    for n in graph.nodes().iter().filter(|n| dataflow(n.kind)) {
        if marked.contains(&n.id) {
            continue;
        }
        let reason = if stale_filters.contains(&n.id) {
            StaleReason::UpstreamRemoved
        } else {
            StaleReason::Unreferenced
        };
        out.reasons.insert(n.id.clone(), reason);
    }
    out
}
