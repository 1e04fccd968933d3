//! In-memory model of the declarative chart grammar subset.
//!
//! Documents are JSON, structurally a subset of Vega-Lite v5: a data source,
//! an ordered transform pipeline, a mark, channel encodings, an optional
//! facet, optional layers and a handful of top-level properties. Keys the
//! model does not understand are kept in `extras` bags so that a
//! parse/serialize cycle never loses author content.

pub mod expr;
mod parse;
mod serialize;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use expr::{BinOp, Expr, ExprError};
pub use parse::{parse_spec, ParseError, ParseErrors};
pub use serialize::{canonical_json, number_value, serialize_spec};
pub use validate::{format_compatible, validate_against, validate_spec, Columns, SchemaViolation};
pub(crate) use validate::is_temporal_format;

pub type Extras = Map<String, Value>;

/// Measurement kind of an encoded field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "Q")]
    Quantitative,
    #[serde(rename = "N")]
    Nominal,
    #[serde(rename = "O")]
    Ordinal,
    #[serde(rename = "T")]
    Temporal,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Quantitative, Kind::Nominal, Kind::Ordinal, Kind::Temporal];

    pub fn letter(self) -> &'static str {
        match self {
            Kind::Quantitative => "Q",
            Kind::Nominal => "N",
            Kind::Ordinal => "O",
            Kind::Temporal => "T",
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Kind::Quantitative => "quantitative",
            Kind::Nominal => "nominal",
            Kind::Ordinal => "ordinal",
            Kind::Temporal => "temporal",
        }
    }

    /// Nominal and ordinal kinds partition data into categories.
    pub fn is_discrete(self) -> bool {
        matches!(self, Kind::Nominal | Kind::Ordinal)
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Q" | "quantitative" => Ok(Kind::Quantitative),
            "N" | "nominal" => Ok(Kind::Nominal),
            "O" | "ordinal" => Ok(Kind::Ordinal),
            "T" | "temporal" => Ok(Kind::Temporal),
            other => Err(format!("unknown field type: {other}")),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
    Color,
    Size,
    Shape,
    Opacity,
    Row,
    Column,
    Facet,
    Theta,
}

impl Channel {
    pub const ALL: [Channel; 10] = [
        Channel::X,
        Channel::Y,
        Channel::Color,
        Channel::Size,
        Channel::Shape,
        Channel::Opacity,
        Channel::Row,
        Channel::Column,
        Channel::Facet,
        Channel::Theta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Color => "color",
            Channel::Size => "size",
            Channel::Shape => "shape",
            Channel::Opacity => "opacity",
            Channel::Row => "row",
            Channel::Column => "column",
            Channel::Facet => "facet",
            Channel::Theta => "theta",
        }
    }

    /// Property name of the guide attached to this channel, if any.
    pub fn guide_key(self) -> Option<&'static str> {
        match self {
            Channel::X | Channel::Y => Some("axis"),
            Channel::Color | Channel::Size | Channel::Shape | Channel::Opacity => Some("legend"),
            Channel::Row | Channel::Column | Channel::Facet => Some("header"),
            Channel::Theta => None,
        }
    }

    pub fn is_positional(self) -> bool {
        matches!(self, Channel::X | Channel::Y)
    }

    /// Channels that split the view into panels.
    pub fn is_structural(self) -> bool {
        matches!(self, Channel::Row | Channel::Column | Channel::Facet)
    }

    pub fn has_legend(self) -> bool {
        matches!(self, Channel::Color | Channel::Size | Channel::Shape | Channel::Opacity)
    }
}

impl PartialOrd for Channel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

// Lexicographic by name, matching canonical key order.
impl Ord for Channel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown channel: {s}"))
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateOp {
    Mean,
    Sum,
    Min,
    Max,
    Count,
    Median,
}

impl AggregateOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregateOp::Mean => "mean",
            AggregateOp::Sum => "sum",
            AggregateOp::Min => "min",
            AggregateOp::Max => "max",
            AggregateOp::Count => "count",
            AggregateOp::Median => "median",
        }
    }

    /// Whether the operation can consume a field of `kind`.
    pub fn accepts(self, kind: Kind) -> bool {
        match self {
            AggregateOp::Count => true,
            AggregateOp::Min | AggregateOp::Max => {
                matches!(kind, Kind::Quantitative | Kind::Temporal)
            }
            _ => kind == Kind::Quantitative,
        }
    }
}

impl FromStr for AggregateOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" | "average" => Ok(AggregateOp::Mean),
            "sum" => Ok(AggregateOp::Sum),
            "min" => Ok(AggregateOp::Min),
            "max" => Ok(AggregateOp::Max),
            "count" => Ok(AggregateOp::Count),
            "median" => Ok(AggregateOp::Median),
            other => Err(format!("unsupported aggregate op: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataLocation {
    Url(String),
    Inline(Vec<Map<String, Value>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub location: DataLocation,
    pub extras: Extras,
}

impl DataSource {
    pub fn url(url: impl Into<String>) -> Self {
        DataSource {
            location: DataLocation::Url(url.into()),
            extras: Extras::new(),
        }
    }

    /// Column names of inline data in first-appearance order.
    pub fn inline_columns(&self) -> Option<Vec<String>> {
        match &self.location {
            DataLocation::Url(_) => None,
            DataLocation::Inline(rows) => {
                let mut cols: Vec<String> = Vec::new();
                for row in rows {
                    for key in row.keys() {
                        if !cols.contains(key) {
                            cols.push(key.clone());
                        }
                    }
                }
                Some(cols)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Filter,
    Aggregate,
    Calculate,
    Bin,
    #[serde(rename = "timeunit")]
    TimeUnit,
    Fold,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Filter => "filter",
            TransformKind::Aggregate => "aggregate",
            TransformKind::Calculate => "calculate",
            TransformKind::Bin => "bin",
            TransformKind::TimeUnit => "timeunit",
            TransformKind::Fold => "fold",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredicateTest {
    Equal(Value),
    OneOf(Vec<Value>),
    Range(Value, Value),
    Gt(Value),
    Gte(Value),
    Lt(Value),
    Lte(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub field: String,
    pub test: PredicateTest,
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateField {
    pub op: AggregateOp,
    pub field: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformOp {
    Filter(Predicate),
    /// `join` keeps every input row and field (joinaggregate); otherwise only
    /// the group-by fields and the aggregate outputs survive.
    Aggregate {
        ops: Vec<AggregateField>,
        groupby: Vec<String>,
        join: bool,
    },
    Calculate {
        expr: Expr,
        output: String,
    },
    /// `paired` records whether `as` was written as a two-element list.
    Bin {
        field: String,
        params: Value,
        start: String,
        end: String,
        paired: bool,
    },
    TimeUnit {
        unit: String,
        field: String,
        output: String,
    },
    Fold {
        fields: Vec<String>,
        key: String,
        value: String,
    },
}

/// Which references of a transform a rename applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSlot {
    /// Fields whose values are read (excluding group-by keys).
    Value,
    GroupBy,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub op: TransformOp,
    pub extras: Extras,
}

impl Transform {
    pub fn new(op: TransformOp) -> Self {
        Transform {
            op,
            extras: Extras::new(),
        }
    }

    pub fn kind(&self) -> TransformKind {
        match &self.op {
            TransformOp::Filter(_) => TransformKind::Filter,
            TransformOp::Aggregate { .. } => TransformKind::Aggregate,
            TransformOp::Calculate { .. } => TransformKind::Calculate,
            TransformOp::Bin { .. } => TransformKind::Bin,
            TransformOp::TimeUnit { .. } => TransformKind::TimeUnit,
            TransformOp::Fold { .. } => TransformKind::Fold,
        }
    }

    /// Value inputs followed by group-by keys, deduplicated in order.
    pub fn inputs(&self) -> Vec<String> {
        let mut out = self.value_inputs();
        for g in self.groupby() {
            if !out.contains(g) {
                out.push(g.clone());
            }
        }
        out
    }

    pub fn value_inputs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |f: &str| {
            if !out.iter().any(|o| o == f) {
                out.push(f.to_string());
            }
        };
        match &self.op {
            TransformOp::Filter(p) => push(&p.field),
            TransformOp::Aggregate { ops, .. } => {
                for op in ops {
                    if let Some(f) = &op.field {
                        push(f);
                    }
                }
            }
            TransformOp::Calculate { expr, .. } => {
                for f in expr.fields() {
                    push(&f);
                }
            }
            TransformOp::Bin { field, .. } | TransformOp::TimeUnit { field, .. } => push(field),
            TransformOp::Fold { fields, .. } => {
                for f in fields {
                    push(f);
                }
            }
        }
        out
    }

    pub fn groupby(&self) -> &[String] {
        match &self.op {
            TransformOp::Aggregate { groupby, .. } => groupby,
            _ => &[],
        }
    }

    pub fn outputs(&self) -> Vec<String> {
        match &self.op {
            TransformOp::Filter(_) => Vec::new(),
            TransformOp::Aggregate { ops, .. } => ops.iter().map(|o| o.output.clone()).collect(),
            TransformOp::Calculate { output, .. } | TransformOp::TimeUnit { output, .. } => {
                vec![output.clone()]
            }
            TransformOp::Bin { start, end, .. } => vec![start.clone(), end.clone()],
            TransformOp::Fold { key, value, .. } => vec![key.clone(), value.clone()],
        }
    }

    /// A non-join aggregate drops every field except group-by keys and outputs.
    pub fn is_blocking(&self) -> bool {
        matches!(&self.op, TransformOp::Aggregate { join: false, .. })
    }

    /// The single input a given output is computed from, when there is one.
    pub fn primary_input(&self, output: &str) -> Option<String> {
        match &self.op {
            TransformOp::Aggregate { ops, .. } => ops
                .iter()
                .find(|o| o.output == output)
                .and_then(|o| o.field.clone()),
            TransformOp::Calculate { expr, output: out } if out == output => {
                let fields = expr.fields();
                (fields.len() == 1).then(|| fields[0].clone())
            }
            TransformOp::Bin {
                field, start, end, ..
            } if start == output || end == output => Some(field.clone()),
            TransformOp::TimeUnit {
                field, output: out, ..
            } if out == output => Some(field.clone()),
            _ => None,
        }
    }

    /// Whether `input` of the given kind is acceptable as a value input.
    pub fn accepts_input(&self, input: &str, kind: Kind) -> bool {
        match &self.op {
            TransformOp::Filter(_) | TransformOp::Fold { .. } => true,
            TransformOp::Aggregate { ops, .. } => ops
                .iter()
                .filter(|o| o.field.as_deref() == Some(input))
                .all(|o| o.op.accepts(kind)),
            TransformOp::Calculate { .. } | TransformOp::Bin { .. } => kind == Kind::Quantitative,
            TransformOp::TimeUnit { .. } => kind == Kind::Temporal,
        }
    }

    /// Kind of a produced field given the kinds of this transform's inputs.
    pub fn output_kind(&self, output: &str, input_kind: impl Fn(&str) -> Option<Kind>) -> Kind {
        match &self.op {
            TransformOp::Aggregate { ops, .. } => {
                match ops.iter().find(|o| o.output == output) {
                    Some(AggregateField {
                        op: AggregateOp::Min | AggregateOp::Max,
                        field: Some(f),
                        ..
                    }) => input_kind(f).unwrap_or(Kind::Quantitative),
                    _ => Kind::Quantitative,
                }
            }
            TransformOp::TimeUnit { .. } => Kind::Temporal,
            TransformOp::Fold { key, .. } if key == output => Kind::Nominal,
            _ => Kind::Quantitative,
        }
    }

    pub fn rename_fields(&mut self, slot: FieldSlot, rename: &impl Fn(&str) -> Option<String>) {
        let apply = |name: &mut String| {
            if let Some(new) = rename(name) {
                *name = new;
            }
        };
        match (&mut self.op, slot) {
            (TransformOp::Filter(p), FieldSlot::Value) => apply(&mut p.field),
            (TransformOp::Aggregate { ops, .. }, FieldSlot::Value) => {
                for op in ops {
                    if let Some(f) = op.field.as_mut() {
                        apply(f);
                    }
                }
            }
            (TransformOp::Aggregate { groupby, .. }, FieldSlot::GroupBy) => {
                for g in groupby {
                    apply(g);
                }
            }
            (TransformOp::Aggregate { ops, .. }, FieldSlot::Output) => {
                for op in ops {
                    apply(&mut op.output);
                }
            }
            (TransformOp::Calculate { expr, .. }, FieldSlot::Value) => expr.rename_fields(rename),
            (TransformOp::Calculate { output, .. }, FieldSlot::Output) => apply(output),
            (TransformOp::Bin { field, .. }, FieldSlot::Value) => apply(field),
            (TransformOp::Bin { start, end, .. }, FieldSlot::Output) => {
                apply(start);
                apply(end);
            }
            (TransformOp::TimeUnit { field, .. }, FieldSlot::Value) => apply(field),
            (TransformOp::TimeUnit { output, .. }, FieldSlot::Output) => apply(output),
            (TransformOp::Fold { fields, .. }, FieldSlot::Value) => {
                for f in fields {
                    apply(f);
                }
            }
            (TransformOp::Fold { key, value, .. }, FieldSlot::Output) => {
                apply(key);
                apply(value);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleType {
    Linear,
    Log,
    Ordinal,
    Time,
    Other(String),
}

impl ScaleType {
    pub fn as_str(&self) -> &str {
        match self {
            ScaleType::Linear => "linear",
            ScaleType::Log => "log",
            ScaleType::Ordinal => "ordinal",
            ScaleType::Time => "time",
            ScaleType::Other(s) => s,
        }
    }

    pub fn parse(s: &str) -> ScaleType {
        match s {
            "linear" => ScaleType::Linear,
            "log" => ScaleType::Log,
            "ordinal" => ScaleType::Ordinal,
            "time" => ScaleType::Time,
            other => ScaleType::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Numeric { lo: f64, hi: f64 },
    Categories(Vec<String>),
    Other(Value),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScaleDef {
    pub scale_type: Option<ScaleType>,
    pub domain: Option<Domain>,
    pub range: Option<Value>,
    pub extras: Extras,
}

impl ScaleDef {
    pub fn is_bare(&self) -> bool {
        self.scale_type.is_none() && self.domain.is_none() && self.range.is_none() && self.extras.is_empty()
    }
}

/// Axis, legend or header definition. A hidden guide serializes as `null`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideDef {
    pub visible: bool,
    pub title: Option<String>,
    pub format: Option<String>,
    pub label_angle: Option<f64>,
    pub extras: Extras,
}

impl GuideDef {
    /// No title, format, angle or other properties.
    pub fn is_bare(&self) -> bool {
        self.title.is_none() && self.format.is_none() && self.label_angle.is_none() && self.extras.is_empty()
    }
}

impl Default for GuideDef {
    fn default() -> Self {
        GuideDef {
            visible: true,
            title: None,
            format: None,
            label_angle: None,
            extras: Extras::new(),
        }
    }
}

impl GuideDef {
    pub fn hidden() -> Self {
        GuideDef {
            visible: false,
            ..GuideDef::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub field: String,
    pub kind: Kind,
    pub aggregate: Option<AggregateOp>,
    pub scale: Option<ScaleDef>,
    pub guide: Option<GuideDef>,
    pub extras: Extras,
}

impl Encoding {
    pub fn new(field: impl Into<String>, kind: Kind) -> Self {
        Encoding {
            field: field.into(),
            kind,
            aggregate: None,
            scale: None,
            guide: None,
            extras: Extras::new(),
        }
    }

    /// A missing guide means the grammar's default, which is visible.
    pub fn guide_visible(&self) -> bool {
        self.guide.as_ref().is_none_or(|g| g.visible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkDef {
    pub mark_type: String,
    /// Written as `{"type": ...}` rather than a bare string.
    pub object_form: bool,
    pub extras: Extras,
}

impl MarkDef {
    pub fn new(mark_type: impl Into<String>) -> Self {
        MarkDef {
            mark_type: mark_type.into(),
            object_form: false,
            extras: Extras::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Title {
    pub text: String,
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChartSpec {
    pub data: Option<DataSource>,
    pub transforms: Vec<Transform>,
    pub mark: Option<MarkDef>,
    pub encodings: BTreeMap<Channel, Encoding>,
    pub facet: Option<Encoding>,
    pub layers: Option<Vec<ChartSpec>>,
    pub title: Option<Title>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub extras: Extras,
}

/// Location of an encoding: top level (`layer == None`) or inside a layer.
/// The top-level `facet` property is addressed as channel `facet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EncodingPath {
    pub layer: Option<usize>,
    pub channel: Channel,
    pub top_facet: bool,
}

impl EncodingPath {
    pub fn pointer(&self) -> String {
        let prefix = self.layer.map(|l| format!("/layer/{l}")).unwrap_or_default();
        if self.top_facet {
            format!("{prefix}/facet")
        } else {
            format!("{prefix}/encoding/{}", self.channel)
        }
    }

    /// Stable identifier used for graph node ids.
    pub fn id(&self) -> String {
        match self.layer {
            Some(l) => format!("l{l}.{}", self.channel),
            None => self.channel.to_string(),
        }
    }
}

impl FromStr for EncodingPath {
    type Err = String;

    /// Parses the pointer form produced by [`EncodingPath::pointer`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed encoding path: {s}");
        let parts: Vec<&str> = s.split('/').collect();
        let (layer, rest) = match parts.as_slice() {
            ["", "layer", l, rest @ ..] => (Some(l.parse().map_err(|_| bad())?), rest),
            ["", rest @ ..] => (None, rest),
            _ => return Err(bad()),
        };
        match rest {
            ["facet"] => Ok(EncodingPath {
                layer,
                channel: Channel::Facet,
                top_facet: true,
            }),
            ["encoding", ch] => Ok(EncodingPath {
                layer,
                channel: ch.parse().map_err(|_| bad())?,
                top_facet: false,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for EncodingPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.pointer())
    }
}

impl<'de> Deserialize<'de> for EncodingPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransformId {
    pub layer: Option<usize>,
    pub index: usize,
}

impl TransformId {
    pub fn pointer(&self) -> String {
        match self.layer {
            Some(l) => format!("/layer/{l}/transform/{}", self.index),
            None => format!("/transform/{}", self.index),
        }
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "l{l}.t{}", self.index),
            None => write!(f, "t{}", self.index),
        }
    }
}

impl FromStr for TransformId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed transform id: {s}");
        let (layer, rest) = match s.split_once('.') {
            Some((l, rest)) => {
                let l = l.strip_prefix('l').ok_or_else(bad)?;
                (Some(l.parse().map_err(|_| bad())?), rest)
            }
            None => (None, s),
        };
        let index = rest
            .strip_prefix('t')
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        Ok(TransformId { layer, index })
    }
}

impl Serialize for TransformId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransformId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl ChartSpec {
    /// Every encoding in document order: top-level channels, the top-level
    /// facet, then each layer's channels.
    pub fn encodings(&self) -> Vec<(EncodingPath, &Encoding)> {
        let mut out = Vec::new();
        for (ch, enc) in &self.encodings {
            out.push((
                EncodingPath {
                    layer: None,
                    channel: *ch,
                    top_facet: false,
                },
                enc,
            ));
        }
        if let Some(f) = &self.facet {
            out.push((
                EncodingPath {
                    layer: None,
                    channel: Channel::Facet,
                    top_facet: true,
                },
                f,
            ));
        }
        for (i, layer) in self.layers.iter().flatten().enumerate() {
            for (ch, enc) in &layer.encodings {
                out.push((
                    EncodingPath {
                        layer: Some(i),
                        channel: *ch,
                        top_facet: false,
                    },
                    enc,
                ));
            }
        }
        out
    }

    pub fn encoding(&self, path: &EncodingPath) -> Option<&Encoding> {
        let scope = match path.layer {
            Some(l) => self.layers.as_ref()?.get(l)?,
            None => self,
        };
        if path.top_facet {
            scope.facet.as_ref()
        } else {
            scope.encodings.get(&path.channel)
        }
    }

    pub fn encoding_mut(&mut self, path: &EncodingPath) -> Option<&mut Encoding> {
        let scope = match path.layer {
            Some(l) => self.layers.as_mut()?.get_mut(l)?,
            None => self,
        };
        if path.top_facet {
            scope.facet.as_mut()
        } else {
            scope.encodings.get_mut(&path.channel)
        }
    }

    pub fn remove_encoding(&mut self, path: &EncodingPath) -> Option<Encoding> {
        let scope = match path.layer {
            Some(l) => self.layers.as_mut()?.get_mut(l)?,
            None => self,
        };
        if path.top_facet {
            scope.facet.take()
        } else {
            scope.encodings.remove(&path.channel)
        }
    }

    /// Transforms with their ids in execution order (top level first).
    pub fn transforms(&self) -> Vec<(TransformId, &Transform)> {
        let mut out: Vec<_> = self
            .transforms
            .iter()
            .enumerate()
            .map(|(i, t)| (TransformId { layer: None, index: i }, t))
            .collect();
        for (l, layer) in self.layers.iter().flatten().enumerate() {
            out.extend(layer.transforms.iter().enumerate().map(|(i, t)| {
                (
                    TransformId {
                        layer: Some(l),
                        index: i,
                    },
                    t,
                )
            }));
        }
        out
    }

    pub fn transform(&self, id: &TransformId) -> Option<&Transform> {
        match id.layer {
            Some(l) => self.layers.as_ref()?.get(l)?.transforms.get(id.index),
            None => self.transforms.get(id.index),
        }
    }

    pub fn transforms_mut(&mut self, layer: Option<usize>) -> Option<&mut Vec<Transform>> {
        match layer {
            Some(l) => Some(&mut self.layers.as_mut()?.get_mut(l)?.transforms),
            None => Some(&mut self.transforms),
        }
    }

    /// The first mark found: the spec's own or its first layer's.
    pub fn primary_mark(&self) -> Option<&MarkDef> {
        self.mark
            .as_ref()
            .or_else(|| self.layers.iter().flatten().find_map(|l| l.mark.as_ref()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_order_is_lexicographic() {
        let mut chans = Channel::ALL.to_vec();
        chans.sort();
        let names: Vec<_> = chans.iter().map(|c| c.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn transform_id_round_trips() {
        for s in ["t0", "t12", "l1.t3"] {
            assert_eq!(s.parse::<TransformId>().unwrap().to_string(), s);
        }
        assert!("x3".parse::<TransformId>().is_err());
        assert!("l.t3".parse::<TransformId>().is_err());
    }

    #[test]
    fn kind_accepts_letters_and_words() {
        assert_eq!("T".parse::<Kind>().unwrap(), Kind::Temporal);
        assert_eq!("nominal".parse::<Kind>().unwrap(), Kind::Nominal);
        assert!("X".parse::<Kind>().is_err());
    }
}
