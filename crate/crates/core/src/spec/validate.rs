use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::*;

/// Column set of the data a spec will be bound to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Columns {
    /// Any name not produced by a transform is presumed to be a column.
    Unknown,
    Known(BTreeSet<String>),
}

impl Columns {
    pub fn known<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Columns::Known(names.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum SchemaViolation {
    UnresolvedField {
        field: String,
        path: String,
        in_transform: bool,
    },
    FormatKindMismatch {
        path: String,
        format: String,
        kind: Kind,
    },
    MissingData {
        path: String,
    },
    MissingMark {
        path: String,
    },
    MarkAndLayers {
        path: String,
    },
    EmptyLayers {
        path: String,
    },
    InvalidDomain {
        path: String,
        lo: f64,
        hi: f64,
    },
    DuplicateField {
        field: String,
        path: String,
    },
    FacetConflict {
        path: String,
    },
}

impl SchemaViolation {
    pub fn path(&self) -> &str {
        match self {
            SchemaViolation::UnresolvedField { path, .. }
            | SchemaViolation::FormatKindMismatch { path, .. }
            | SchemaViolation::MissingData { path }
            | SchemaViolation::MissingMark { path }
            | SchemaViolation::MarkAndLayers { path }
            | SchemaViolation::EmptyLayers { path }
            | SchemaViolation::InvalidDomain { path, .. }
            | SchemaViolation::DuplicateField { path, .. }
            | SchemaViolation::FacetConflict { path } => path,
        }
    }

    pub fn is_unresolved(&self) -> bool {
        matches!(self, SchemaViolation::UnresolvedField { .. })
    }

    pub fn message(&self) -> String {
        match self {
            SchemaViolation::UnresolvedField { field, .. } => {
                format!("field {field:?} has no producer")
            }
            SchemaViolation::FormatKindMismatch { format, kind, .. } => {
                format!("format {format:?} is not valid for {} fields", kind.word())
            }
            SchemaViolation::MissingData { .. } => "spec has no data source".into(),
            SchemaViolation::MissingMark { .. } => "spec has neither a mark nor layers".into(),
            SchemaViolation::MarkAndLayers { .. } => "spec has both a mark and layers".into(),
            SchemaViolation::EmptyLayers { .. } => "layer list is empty".into(),
            SchemaViolation::InvalidDomain { lo, hi, .. } => {
                format!("domain [{lo}, {hi}] has lo > hi")
            }
            SchemaViolation::DuplicateField { field, .. } => {
                format!("field {field:?} is defined twice")
            }
            SchemaViolation::FacetConflict { .. } => {
                "facet given both as property and as encoding channel".into()
            }
        }
    }
}

/// True when the format string contains a strftime-style directive.
pub(crate) fn is_temporal_format(format: &str) -> bool {
    let bytes = format.as_bytes();
    bytes
        .windows(2)
        .any(|w| w[0] == b'%' && w[1].is_ascii_alphabetic())
}

fn is_number_format(format: &str) -> bool {
    !format.is_empty()
        && format
            .chars()
            .all(|c| c.is_ascii_digit() || "$,.~eEfgGnoprsxXbcd%+-( #<>=^".contains(c))
}

/// Whether a guide format string can be applied to fields of `kind`.
pub fn format_compatible(format: &str, kind: Kind) -> bool {
    if is_temporal_format(format) {
        kind == Kind::Temporal
    } else if is_number_format(format) {
        kind != Kind::Temporal
    } else {
        true
    }
}

#[derive(Debug, Clone)]
struct Scope {
    open: bool,
    fields: BTreeSet<String>,
    /// Outputs of transforms not yet executed; never resolvable as columns.
    pending: BTreeSet<String>,
}

impl Scope {
    fn resolves(&self, f: &str) -> bool {
        self.fields.contains(f) || (self.open && !self.pending.contains(f))
    }
}

/// Checks structural invariants; inline data supplies the column set.
pub fn validate_spec(spec: &ChartSpec) -> Vec<SchemaViolation> {
    let columns = spec
        .data
        .as_ref()
        .and_then(DataSource::inline_columns)
        .map(Columns::known)
        .unwrap_or(Columns::Unknown);
    validate_against(spec, &columns)
}

/// Checks structural invariants resolving source fields against `columns`.
pub fn validate_against(spec: &ChartSpec, columns: &Columns) -> Vec<SchemaViolation> {
    let mut out = Vec::new();
    let scope = match columns {
        Columns::Unknown => Scope {
            open: true,
            fields: BTreeSet::new(),
            pending: BTreeSet::new(),
        },
        Columns::Known(c) => Scope {
            open: false,
            fields: c.clone(),
            pending: BTreeSet::new(),
        },
    };
    if spec.data.is_none() {
        out.push(SchemaViolation::MissingData {
            path: "/data".into(),
        });
    }
    walk(spec, scope, "", true, &mut out);
    out
}

fn walk(spec: &ChartSpec, mut scope: Scope, prefix: &str, root: bool, out: &mut Vec<SchemaViolation>) {
    if !root {
        if let Some(d) = &spec.data {
            scope = match d.inline_columns() {
                Some(cols) => Scope {
                    open: false,
                    fields: cols.into_iter().collect(),
                    pending: BTreeSet::new(),
                },
                None => Scope {
                    open: true,
                    fields: BTreeSet::new(),
                    pending: BTreeSet::new(),
                },
            };
        }
    }
    scope
        .pending
        .extend(spec.transforms.iter().flat_map(Transform::outputs));

    for (i, t) in spec.transforms.iter().enumerate() {
        let path = format!("{prefix}/transform/{i}");
        for input in t.inputs() {
            if !scope.resolves(&input) {
                out.push(SchemaViolation::UnresolvedField {
                    field: input,
                    path: path.clone(),
                    in_transform: true,
                });
            }
        }
        let outputs = t.outputs();
        for o in &outputs {
            scope.pending.remove(o);
        }
        if t.is_blocking() {
            scope.open = false;
            scope.fields = t.groupby().iter().cloned().collect();
        }
        for o in outputs {
            if scope.fields.contains(&o) {
                out.push(SchemaViolation::DuplicateField {
                    field: o.clone(),
                    path: path.clone(),
                });
            }
            scope.fields.insert(o);
        }
    }

    match (&spec.mark, &spec.layers) {
        (None, None) => out.push(SchemaViolation::MissingMark {
            path: format!("{prefix}/mark"),
        }),
        (Some(_), Some(_)) => out.push(SchemaViolation::MarkAndLayers {
            path: format!("{prefix}/layer"),
        }),
        _ => {}
    }
    if matches!(&spec.layers, Some(l) if l.is_empty()) {
        out.push(SchemaViolation::EmptyLayers {
            path: format!("{prefix}/layer"),
        });
    }

    let mut encodings: Vec<(String, &Encoding)> = spec
        .encodings
        .iter()
        .map(|(ch, e)| (format!("{prefix}/encoding/{ch}"), e))
        .collect();
    if let Some(f) = &spec.facet {
        if spec.encodings.contains_key(&Channel::Facet) {
            out.push(SchemaViolation::FacetConflict {
                path: format!("{prefix}/facet"),
            });
        }
        encodings.push((format!("{prefix}/facet"), f));
    }
    for (path, enc) in encodings {
        if !scope.resolves(&enc.field) {
            out.push(SchemaViolation::UnresolvedField {
                field: enc.field.clone(),
                path: path.clone(),
                in_transform: false,
            });
        }
        if let Some(Domain::Numeric { lo, hi }) = enc.scale.as_ref().and_then(|s| s.domain.as_ref()) {
            if lo > hi {
                out.push(SchemaViolation::InvalidDomain {
                    path: format!("{path}/scale/domain"),
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        if let Some(format) = enc.guide.as_ref().and_then(|g| g.format.as_ref()) {
            if !format_compatible(format, enc.kind) {
                let key = if path.ends_with("/facet") {
                    "header"
                } else {
                    path.rsplit('/')
                        .next()
                        .and_then(|c| c.parse::<Channel>().ok())
                        .and_then(Channel::guide_key)
                        .unwrap_or("axis")
                };
                out.push(SchemaViolation::FormatKindMismatch {
                    path: format!("{path}/{key}/format"),
                    format: format.clone(),
                    kind: enc.kind,
                });
            }
        }
    }

    for (i, layer) in spec.layers.iter().flatten().enumerate() {
        walk(layer, scope.clone(), &format!("{prefix}/layer/{i}"), false, out);
    }
}
