//! Dependency graph over fields, transforms, encodings, scales and guides.

mod stale;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::spec::{
    validate_against, ChartSpec, Columns, EncodingPath, SchemaViolation, TransformId,
    TransformKind,
};

pub use stale::{stale_nodes, StaleReason, StaleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    SourceField,
    DerivedField,
    Transform,
    Encoding,
    Scale,
    Guide,
}

impl NodeKind {
    pub fn is_field(self) -> bool {
        matches!(self, NodeKind::SourceField | NodeKind::DerivedField)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::SourceField => "source-field",
            NodeKind::DerivedField => "derived-field",
            NodeKind::Transform => "transform",
            NodeKind::Encoding => "encoding",
            NodeKind::Scale => "scale",
            NodeKind::Guide => "guide",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Field name, transform id (`t0`, `l1.t2`) or encoding path id.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<TransformKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Derives,
    Consumes,
    Attaches,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unresolved field {field:?} at {path}")]
    UnresolvedField { field: String, path: String },
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("edge references unknown node {0:?}")]
    DanglingEdge(String),
    #[error("graph contains a cycle through {0:?}")]
    Cycle(String),
    #[error("derived field {0:?} must have exactly one producing transform")]
    DerivedProducer(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct DependencyGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for DependencyGraph {
    type Error = GraphError;
    fn try_from(r: RawGraph) -> Result<Self, GraphError> {
        DependencyGraph::from_parts(r.nodes, r.edges)
    }
}

impl From<DependencyGraph> for RawGraph {
    fn from(g: DependencyGraph) -> RawGraph {
        RawGraph {
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl DependencyGraph {
    /// Builds a graph from explicit parts, checking the structural invariants.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        for e in &edges {
            for end in [&e.from, &e.to] {
                if !index.contains_key(end) {
                    return Err(GraphError::DanglingEdge(end.clone()));
                }
            }
        }
        let g = DependencyGraph {
            nodes,
            edges,
            index,
        };
        for n in g.nodes.iter().filter(|n| n.kind == NodeKind::DerivedField) {
            let producers = g
                .edges
                .iter()
                .filter(|e| e.to == n.id && e.relation == Relation::Derives)
                .count();
            if producers != 1 {
                return Err(GraphError::DerivedProducer(n.name.clone()));
            }
        }
        g.check_acyclic()?;
        Ok(g)
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        let mut indegree = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indegree[self.index[&e.to]] += 1;
        }
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for e in self.edges.iter().filter(|e| e.from == self.nodes[i].id) {
                let j = self.index[&e.to];
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
        match (0..self.nodes.len()).find(|&i| indegree[i] > 0) {
            Some(i) if seen < self.nodes.len() => Err(GraphError::Cycle(self.nodes[i].id.clone())),
            _ => Ok(()),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// The node for a field name; the latest producer wins for redefined names.
    pub fn field_node(&self, name: &str) -> Option<&Node> {
        self.nodes
            .iter()
            .rev()
            .find(|n| n.kind.is_field() && n.name == name)
    }

    pub fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(RawGraph::from(self.clone())).expect("graph serializes")
    }

    /// Adjacency listing: one line per node with its outgoing edges.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let op = n.op.map(|o| format!(" ({})", o.as_str())).unwrap_or_default();
            let _ = writeln!(out, "{} [{}]{}", n.id, n.kind.as_str(), op);
            for e in self.successors(&n.id) {
                let rel = match e.relation {
                    Relation::Derives => "derives",
                    Relation::Consumes => "consumed-by",
                    Relation::Attaches => "attaches",
                };
                let _ = writeln!(out, "  {rel} -> {}", e.to);
            }
        }
        out
    }

    /// Every node from which `id` can be reached (excluding `id`).
    pub fn ancestors(&self, id: &str) -> BTreeSet<String> {
        self.closure(id, false)
    }

    /// Every node reachable from `id` (excluding `id`).
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        self.closure(id, true)
    }

    fn closure(&self, id: &str, forward: bool) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id.to_string()];
        while let Some(cur) = stack.pop() {
            for e in &self.edges {
                let (a, b) = if forward { (&e.from, &e.to) } else { (&e.to, &e.from) };
                if *a == cur && seen.insert(b.clone()) {
                    stack.push(b.clone());
                }
            }
        }
        seen.remove(id);
        seen
    }

    pub fn transform_node_id(id: &TransformId) -> String {
        format!("transform:{id}")
    }

    pub fn encoding_node_id(path: &EncodingPath) -> String {
        format!("encoding:{}", path.id())
    }
}

struct Builder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    ids: BTreeSet<String>,
    /// Current producer node for each field name.
    fields: BTreeMap<String, String>,
}

impl Builder {
    fn add(&mut self, kind: NodeKind, prefix: &str, name: &str, op: Option<TransformKind>) -> String {
        let mut id = format!("{prefix}:{name}");
        let mut k = 2;
        while self.ids.contains(&id) {
            id = format!("{prefix}:{name}#{k}");
            k += 1;
        }
        self.ids.insert(id.clone());
        self.nodes.push(Node {
            id: id.clone(),
            kind,
            name: name.to_string(),
            op,
        });
        id
    }

    fn edge(&mut self, from: &str, to: &str, relation: Relation) {
        let e = Edge {
            from: from.to_string(),
            to: to.to_string(),
            relation,
        };
        if from != to && !self.edges.contains(&e) {
            self.edges.push(e);
        }
    }

    fn field(&mut self, name: &str) -> String {
        if let Some(id) = self.fields.get(name) {
            return id.clone();
        }
        let id = self.add(NodeKind::SourceField, "field", name, None);
        self.fields.insert(name.to_string(), id.clone());
        id
    }

    fn view(&mut self, spec: &ChartSpec, layer: Option<usize>) {
        for (i, t) in spec.transforms.iter().enumerate() {
            let tid = TransformId { layer, index: i };
            let tnode = self.add(NodeKind::Transform, "transform", &tid.to_string(), Some(t.kind()));
            for input in t.inputs() {
                let f = self.field(&input);
                self.edge(&f, &tnode, Relation::Consumes);
            }
            for out in t.outputs() {
                let f = self.add(NodeKind::DerivedField, "field", &out, None);
                self.edge(&tnode, &f, Relation::Derives);
                self.fields.insert(out, f);
            }
        }
        let mut encodings: Vec<(EncodingPath, &crate::spec::Encoding)> = spec
            .encodings
            .iter()
            .map(|(c, e)| {
                (
                    EncodingPath {
                        layer,
                        channel: *c,
                        top_facet: false,
                    },
                    e,
                )
            })
            .collect();
        if let Some(f) = &spec.facet {
            encodings.push((
                EncodingPath {
                    layer,
                    channel: crate::spec::Channel::Facet,
                    top_facet: true,
                },
                f,
            ));
        }
        for (path, enc) in encodings {
            let pid = path.id();
            let enode = self.add(NodeKind::Encoding, "encoding", &pid, None);
            let f = self.field(&enc.field);
            self.edge(&f, &enode, Relation::Consumes);
            if enc.scale.is_some() {
                let s = self.add(NodeKind::Scale, "scale", &pid, None);
                self.edge(&enode, &s, Relation::Attaches);
            }
            if enc.guide.as_ref().is_some_and(|g| g.visible) && path.channel.guide_key().is_some() {
                let g = self.add(NodeKind::Guide, "guide", &pid, None);
                self.edge(&enode, &g, Relation::Attaches);
            }
        }
    }
}

/// Builds the graph for a spec, resolving names against its inline columns
/// (or accepting any undeclared name as a source column for URL data).
pub fn build_graph(spec: &ChartSpec) -> Result<DependencyGraph, GraphError> {
    let columns = spec
        .data
        .as_ref()
        .and_then(|d| d.inline_columns())
        .map(Columns::known)
        .unwrap_or(Columns::Unknown);
    build_graph_against(spec, &columns)
}

pub fn build_graph_against(spec: &ChartSpec, columns: &Columns) -> Result<DependencyGraph, GraphError> {
    if let Some(SchemaViolation::UnresolvedField { field, path, .. }) = validate_against(spec, columns)
        .into_iter()
        .find(SchemaViolation::is_unresolved)
    {
        return Err(GraphError::UnresolvedField { field, path });
    }
    Ok(build_graph_lenient(spec))
}

/// Builds the graph without resolution checks; unresolved names become
/// source-field nodes.
pub fn build_graph_lenient(spec: &ChartSpec) -> DependencyGraph {
    let mut b = Builder {
        nodes: Vec::new(),
        edges: Vec::new(),
        ids: BTreeSet::new(),
        fields: BTreeMap::new(),
    };
    b.view(spec, None);
    if let Some(layers) = &spec.layers {
        let top_fields = b.fields.clone();
        for (i, l) in layers.iter().enumerate() {
            // Each layer sees the top-level fields plus its own derivations.
            b.fields = top_fields.clone();
            b.view(l, Some(i));
        }
    }
    DependencyGraph::from_parts(b.nodes, b.edges).expect("builder output satisfies graph invariants")
}

/// Forward closure of a field: every node that transitively consumes it.
pub fn impacted_nodes(graph: &DependencyGraph, changed: &str) -> Result<BTreeSet<String>, GraphError> {
    let node = graph
        .field_node(changed)
        .ok_or_else(|| GraphError::UnknownField(changed.to_string()))?;
    Ok(graph.descendants(&node.id))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::spec::parse_spec;

    pub(crate) const RIDGELINE: &str = r#"{
      "data": {"url": "weather.csv"},
      "transform": [
        {"timeUnit": "month", "field": "date", "as": "Month"},
        {"joinaggregate": [{"op": "mean", "field": "temp", "as": "mean_temp"}], "groupby": ["Month"]},
        {"bin": true, "field": "mean_temp", "as": ["bin_min", "value"]}
      ],
      "mark": "area",
      "encoding": {
        "x": {"field": "bin_min", "type": "quantitative"},
        "y": {"field": "value", "type": "quantitative"},
        "color": {"field": "mean_temp", "type": "quantitative", "legend": null,
                  "scale": {"domain": [-5, 30], "reverse": true}}
      },
      "facet": {"field": "Month", "type": "temporal", "header": {"format": "%B"}}
    }"#;

    #[test]
    fn ridgeline_has_fifteen_nodes() {
        let g = build_graph(&parse_spec(RIDGELINE).unwrap()).unwrap();
        assert_eq!(g.nodes().len(), 15);
        let bin = "transform:t2";
        assert!(g.edges().contains(&Edge {
            from: "field:mean_temp".into(),
            to: bin.into(),
            relation: Relation::Consumes
        }));
        let derived: BTreeSet<_> = g.successors(bin).map(|e| e.to.as_str()).collect();
        assert_eq!(derived, BTreeSet::from(["field:bin_min", "field:value"]));
    }

    #[test]
    fn trivial_spec() {
        let s = parse_spec(
            r#"{"data":{"url":"a.csv"},"mark":"point","encoding":{"x":{"field":"a","type":"Q"},"y":{"field":"b","type":"Q"}}}"#,
        )
        .unwrap();
        let g = build_graph(&s).unwrap();
        assert_eq!(g.nodes().len(), 4);
        assert_eq!(g.edges().iter().filter(|e| e.relation == Relation::Consumes).count(), 2);
    }

    #[test]
    fn chained_calculates_form_a_path() {
        let s = parse_spec(
            r#"{"data":{"url":"a.csv"},"mark":"point",
                "transform":[{"calculate":"datum.a + 1","as":"d1"},{"calculate":"datum.d1 * 2","as":"d2"}],
                "encoding":{"y":{"field":"d2","type":"Q"}}}"#,
        )
        .unwrap();
        let g = build_graph(&s).unwrap();
        let path = ["field:a", "transform:t0", "field:d1", "transform:t1", "field:d2", "encoding:y"];
        for w in path.windows(2) {
            assert!(g.successors(w[0]).any(|e| e.to == w[1]), "{} -> {}", w[0], w[1]);
        }
        assert_eq!(path.len() - 1, 5);
    }

    #[test]
    fn impacted_by_mean_temp() {
        let g = build_graph(&parse_spec(RIDGELINE).unwrap()).unwrap();
        let got = impacted_nodes(&g, "mean_temp").unwrap();
        let want: BTreeSet<String> = [
            "transform:t2",
            "field:bin_min",
            "field:value",
            "encoding:x",
            "encoding:y",
            "encoding:color",
            "scale:color",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(got, want);
        assert!(impacted_nodes(&g, "bin_min").unwrap().len() == 1);
        assert!(matches!(impacted_nodes(&g, "nope"), Err(GraphError::UnknownField(f)) if f == "nope"));
        // Everything except the two source fields sits downstream of date.
        assert_eq!(impacted_nodes(&g, "date").unwrap().len(), 13);
    }

    #[test]
    fn unresolved_reference_is_an_error() {
        let s = parse_spec(
            r#"{"data":{"values":[{"a":1}]},"mark":"point","encoding":{"y":{"field":"value","type":"Q"}}}"#,
        )
        .unwrap();
        assert!(matches!(build_graph(&s), Err(GraphError::UnresolvedField { field, .. }) if field == "value"));
    }

    #[test]
    fn json_round_trip() {
        let g = build_graph(&parse_spec(RIDGELINE).unwrap()).unwrap();
        let back: DependencyGraph = serde_json::from_value(g.to_json()).unwrap();
        assert_eq!(back, g);
        assert!(g.to_text().contains("transform:t2 [transform] (bin)"));
    }
}
