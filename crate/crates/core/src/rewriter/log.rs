use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::spec::{parse_spec, serialize_spec, ChartSpec, ParseErrors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditKind {
    DataReplaced,
    FieldSubst,
    KindChange,
    TransformRemoved,
    TransformAdded,
    FormatRemoved,
    FormatUpdated,
    DomainUpdated,
    TitleUpdated,
    LegendEnabled,
    EncodingDropped,
    EncodingAdded,
    /// Any other property change (for example a flag-driven facet header).
    Other,
}

/// One document change, in JSON Patch terms: `before` absent means the value
/// is added (inserted, for array indices), `after` absent means it is removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: EditKind,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("edit path {0:?} does not exist in the document")]
    MissingPath(String),
    #[error("edit at {path:?} expected a different current value")]
    Mismatch { path: String },
    #[error("replayed document is not a valid spec: {0}")]
    Invalid(#[from] ParseErrors),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewriteLog {
    pub edits: Vec<Edit>,
}

impl RewriteLog {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn kinds(&self) -> Vec<EditKind> {
        self.edits.iter().map(|e| e.kind).collect()
    }

    pub fn extend(&mut self, other: RewriteLog) {
        self.edits.extend(other.edits);
    }

    /// Records the edits turning `before` into `after`.
    pub fn record(&mut self, before: &ChartSpec, after: &ChartSpec) {
        diff(&before.to_value(), &after.to_value(), "", &mut self.edits);
    }

    /// Applies every edit to `original` and re-parses the result.
    pub fn replay(&self, original: &ChartSpec) -> Result<ChartSpec, ReplayError> {
        let mut doc = original.to_value();
        for e in &self.edits {
            apply(&mut doc, e)?;
        }
        let text = serde_json::to_string(&doc).expect("json values serialize");
        Ok(parse_spec(&text)?)
    }

    /// Replays and compares canonical text with `expected`.
    pub fn reproduces(&self, original: &ChartSpec, expected: &ChartSpec) -> bool {
        self.replay(original)
            .is_ok_and(|s| serialize_spec(&s) == serialize_spec(expected))
    }
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn unescape(token: &str) -> String {
    token.replace("~1", "/").replace("~0", "~")
}

fn classify(path: &str, before: Option<&Value>, after: Option<&Value>) -> EditKind {
    let tokens: Vec<String> = path.split('/').skip(1).map(unescape).collect();
    let t: Vec<&str> = tokens.iter().map(String::as_str).collect();
    // Strip a layer prefix: /layer/<i>/...
    let rest: &[&str] = match t.as_slice() {
        ["layer", _, rest @ ..] if !rest.is_empty() => rest,
        other => other,
    };
    let whole = |kind_added, kind_removed, kind_changed| match (before, after) {
        (None, Some(_)) => kind_added,
        (Some(_), None) => kind_removed,
        _ => kind_changed,
    };
    match rest {
        ["data", ..] => EditKind::DataReplaced,
        ["title", ..] => EditKind::TitleUpdated,
        ["transform"] => EditKind::FieldSubst,
        ["transform", _] => whole(EditKind::TransformAdded, EditKind::TransformRemoved, EditKind::FieldSubst),
        ["transform", ..] => EditKind::FieldSubst,
        ["encoding"] | ["facet"] => whole(EditKind::EncodingAdded, EditKind::EncodingDropped, EditKind::FieldSubst),
        ["encoding", _] => whole(EditKind::EncodingAdded, EditKind::EncodingDropped, EditKind::FieldSubst),
        ["encoding", _, tail @ ..] | ["facet", tail @ ..] => match tail {
            ["field"] | ["aggregate"] => EditKind::FieldSubst,
            ["type"] => EditKind::KindChange,
            ["scale", "domain", ..] => EditKind::DomainUpdated,
            [_, "title"] => EditKind::TitleUpdated,
            [_, "format"] | [_, "formatType"] => match after {
                None => EditKind::FormatRemoved,
                Some(_) => EditKind::FormatUpdated,
            },
            ["legend"] if after.is_some_and(|v| !v.is_null()) => EditKind::LegendEnabled,
            ["legend"] if before.is_some_and(Value::is_null) => EditKind::LegendEnabled,
            ["axis" | "legend" | "header"] if after.is_none() && before.is_some_and(|v| v.get("format").is_some()) => {
                EditKind::FormatRemoved
            }
            _ => EditKind::Other,
        },
        _ => EditKind::Other,
    }
}

fn push(out: &mut Vec<Edit>, path: String, before: Option<&Value>, after: Option<&Value>) {
    out.push(Edit {
        kind: classify(&path, before, after),
        path,
        before: before.cloned(),
        after: after.cloned(),
    });
}

/// Indices of `small` inside `big` if `small` is a subsequence of it.
fn subsequence(small: &[Value], big: &[Value]) -> Option<Vec<usize>> {
    let mut at = Vec::with_capacity(small.len());
    let mut j = 0;
    for (i, v) in big.iter().enumerate() {
        if j < small.len() && small[j] == *v {
            at.push(i);
            j += 1;
        }
    }
    (j == small.len()).then_some(at)
}

fn diff(a: &Value, b: &Value, path: &str, out: &mut Vec<Edit>) {
    if a == b {
        return;
    }
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = format!("{path}/{}", escape(k));
                match y.get(k) {
                    Some(vb) => diff(va, vb, &p, out),
                    None => push(out, p, Some(va), None),
                }
            }
            for (k, vb) in y {
                if !x.contains_key(k) {
                    push(out, format!("{path}/{}", escape(k)), None, Some(vb));
                }
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                diff(va, vb, &format!("{path}/{i}"), out);
            }
        }
        (Value::Array(x), Value::Array(y)) if y.len() < x.len() => match subsequence(y, x) {
            // Removals from the back keep earlier indices valid during replay.
            Some(kept) => {
                for i in (0..x.len()).rev().filter(|i| !kept.contains(i)) {
                    push(out, format!("{path}/{i}"), Some(&x[i]), None);
                }
            }
            None => push(out, path.to_string(), Some(a), Some(b)),
        },
        (Value::Array(x), Value::Array(y)) => match subsequence(x, y) {
            Some(kept) => {
                for i in (0..y.len()).filter(|i| !kept.contains(i)) {
                    push(out, format!("{path}/{i}"), None, Some(&y[i]));
                }
            }
            None => push(out, path.to_string(), Some(a), Some(b)),
        },
        _ => push(out, path.to_string(), Some(a), Some(b)),
    }
}

fn apply(doc: &mut Value, e: &Edit) -> Result<(), ReplayError> {
    let missing = || ReplayError::MissingPath(e.path.clone());
    if e.path.is_empty() {
        *doc = e.after.clone().ok_or_else(missing)?;
        return Ok(());
    }
    let (parent_path, last) = e.path.rsplit_once('/').ok_or_else(missing)?;
    let last = unescape(last);
    let parent = doc.pointer_mut(parent_path).ok_or_else(missing)?;
    match parent {
        Value::Object(map) => {
            if map.get(&last) != e.before.as_ref() {
                return Err(ReplayError::Mismatch { path: e.path.clone() });
            }
            match &e.after {
                Some(v) => {
                    map.insert(last, v.clone());
                }
                None => {
                    map.shift_remove(&last);
                }
            }
        }
        Value::Array(items) => {
            let i: usize = last.parse().map_err(|_| missing())?;
            match (&e.before, &e.after) {
                (None, Some(v)) if i <= items.len() => items.insert(i, v.clone()),
                (Some(b), after) if items.get(i) == Some(b) => match after {
                    Some(v) => items[i] = v.clone(),
                    None => {
                        items.remove(i);
                    }
                },
                (Some(_), _) if i < items.len() => {
                    return Err(ReplayError::Mismatch { path: e.path.clone() })
                }
                _ => return Err(missing()),
            }
        }
        _ => return Err(missing()),
    }
    Ok(())
}
