use serde_json::{Map, Number, Value};

use super::*;

const TOP_LEVEL_ORDER: [&str; 9] = [
    "data", "transform", "mark", "encoding", "facet", "layer", "title", "width", "height",
];

/// Canonical text: fixed top-level key order, lexicographic keys elsewhere,
/// two-space indentation, integral floats written as integers, trailing newline.
pub fn serialize_spec(spec: &ChartSpec) -> String {
    let mut text = serde_json::to_string_pretty(&spec.to_value()).expect("json values serialize");
    text.push('\n');
    text
}

/// Recursively sorts object keys.
pub fn canonical_json(v: &Value) -> Value {
    match v {
        Value::Object(o) => {
            let mut keys: Vec<&String> = o.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), canonical_json(&o[k]));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(canonical_json).collect()),
        Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_i64() && !n.is_u64() => number_value(f),
            _ => v.clone(),
        },
        other => other.clone(),
    }
}

pub fn number_value(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Value::Number(Number::from(x as i64))
    } else {
        Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
    }
}

fn sorted(map: Map<String, Value>) -> Value {
    canonical_json(&Value::Object(map))
}

impl ChartSpec {
    pub fn to_value(&self) -> Value {
        let mut fixed: Map<String, Value> = Map::new();
        if let Some(d) = &self.data {
            fixed.insert("data".into(), d.to_value());
        }
        if !self.transforms.is_empty() {
            fixed.insert(
                "transform".into(),
                Value::Array(self.transforms.iter().map(Transform::to_value).collect()),
            );
        }
        if let Some(m) = &self.mark {
            fixed.insert("mark".into(), m.to_value());
        }
        if !self.encodings.is_empty() || (self.mark.is_some() && self.layers.is_none()) {
            let mut enc = Map::new();
            for (ch, e) in &self.encodings {
                enc.insert(ch.to_string(), e.to_value(*ch));
            }
            fixed.insert("encoding".into(), Value::Object(enc));
        }
        if let Some(f) = &self.facet {
            fixed.insert("facet".into(), f.to_value(Channel::Facet));
        }
        if let Some(layers) = &self.layers {
            fixed.insert(
                "layer".into(),
                Value::Array(layers.iter().map(ChartSpec::to_value).collect()),
            );
        }
        if let Some(t) = &self.title {
            fixed.insert("title".into(), t.to_value());
        }
        if let Some(w) = self.width {
            fixed.insert("width".into(), Value::from(w));
        }
        if let Some(h) = self.height {
            fixed.insert("height".into(), Value::from(h));
        }

        let mut out = Map::new();
        for key in TOP_LEVEL_ORDER {
            if let Some(v) = fixed.remove(key) {
                out.insert(key.to_string(), v);
            }
        }
        let mut extra_keys: Vec<&String> = self.extras.keys().collect();
        extra_keys.sort();
        for k in extra_keys {
            out.insert(k.clone(), canonical_json(&self.extras[k]));
        }
        Value::Object(out)
    }
}

impl DataSource {
    pub fn to_value(&self) -> Value {
        let mut m = self.extras.clone();
        match &self.location {
            DataLocation::Url(u) => {
                m.insert("url".into(), Value::String(u.clone()));
            }
            DataLocation::Inline(rows) => {
                m.insert(
                    "values".into(),
                    Value::Array(rows.iter().cloned().map(Value::Object).collect()),
                );
            }
        }
        sorted(m)
    }
}

impl Title {
    pub fn to_value(&self) -> Value {
        if self.extras.is_empty() {
            return Value::String(self.text.clone());
        }
        let mut m = self.extras.clone();
        m.insert("text".into(), Value::String(self.text.clone()));
        sorted(m)
    }
}

impl MarkDef {
    pub fn to_value(&self) -> Value {
        if !self.object_form && self.extras.is_empty() {
            return Value::String(self.mark_type.clone());
        }
        let mut m = self.extras.clone();
        m.insert("type".into(), Value::String(self.mark_type.clone()));
        sorted(m)
    }
}

impl Encoding {
    pub fn to_value(&self, channel: Channel) -> Value {
        let mut m = self.extras.clone();
        m.insert("field".into(), Value::String(self.field.clone()));
        m.insert("type".into(), Value::String(self.kind.word().into()));
        if let Some(a) = self.aggregate {
            m.insert("aggregate".into(), Value::String(a.as_str().into()));
        }
        if let Some(s) = &self.scale {
            m.insert("scale".into(), s.to_value());
        }
        if let (Some(g), Some(key)) = (&self.guide, channel.guide_key()) {
            m.insert(key.into(), g.to_value());
        }
        sorted(m)
    }
}

impl ScaleDef {
    pub fn to_value(&self) -> Value {
        let mut m = self.extras.clone();
        if let Some(t) = &self.scale_type {
            m.insert("type".into(), Value::String(t.as_str().into()));
        }
        if let Some(d) = &self.domain {
            m.insert("domain".into(), d.to_value());
        }
        if let Some(r) = &self.range {
            m.insert("range".into(), r.clone());
        }
        sorted(m)
    }
}

impl Domain {
    pub fn to_value(&self) -> Value {
        match self {
            Domain::Numeric { lo, hi } => Value::Array(vec![number_value(*lo), number_value(*hi)]),
            Domain::Categories(c) => {
                Value::Array(c.iter().map(|s| Value::String(s.clone())).collect())
            }
            Domain::Other(v) => v.clone(),
        }
    }
}

impl GuideDef {
    pub fn to_value(&self) -> Value {
        if !self.visible {
            return Value::Null;
        }
        let mut m = self.extras.clone();
        if let Some(t) = &self.title {
            m.insert("title".into(), Value::String(t.clone()));
        }
        if let Some(f) = &self.format {
            m.insert("format".into(), Value::String(f.clone()));
        }
        if let Some(a) = self.label_angle {
            m.insert("labelAngle".into(), number_value(a));
        }
        sorted(m)
    }
}

fn strings(items: &[String]) -> Value {
    Value::Array(items.iter().map(|s| Value::String(s.clone())).collect())
}

impl Transform {
    pub fn to_value(&self) -> Value {
        let mut m = self.extras.clone();
        match &self.op {
            TransformOp::Filter(p) => {
                m.insert("filter".into(), p.to_value());
            }
            TransformOp::Aggregate { ops, groupby, join } => {
                let items = ops
                    .iter()
                    .map(|o| {
                        let mut om = Map::new();
                        om.insert("op".into(), Value::String(o.op.as_str().into()));
                        if let Some(f) = &o.field {
                            om.insert("field".into(), Value::String(f.clone()));
                        }
                        om.insert("as".into(), Value::String(o.output.clone()));
                        sorted(om)
                    })
                    .collect();
                let key = if *join { "joinaggregate" } else { "aggregate" };
                m.insert(key.into(), Value::Array(items));
                if !groupby.is_empty() {
                    m.insert("groupby".into(), strings(groupby));
                }
            }
            TransformOp::Calculate { expr, output } => {
                m.insert("calculate".into(), Value::String(expr.to_string()));
                m.insert("as".into(), Value::String(output.clone()));
            }
            TransformOp::Bin {
                field,
                params,
                start,
                end,
                paired,
            } => {
                m.insert("bin".into(), params.clone());
                m.insert("field".into(), Value::String(field.clone()));
                let as_value = if *paired || *end != format!("{start}_end") {
                    strings(&[start.clone(), end.clone()])
                } else {
                    Value::String(start.clone())
                };
                m.insert("as".into(), as_value);
            }
            TransformOp::TimeUnit {
                unit,
                field,
                output,
            } => {
                m.insert("timeUnit".into(), Value::String(unit.clone()));
                m.insert("field".into(), Value::String(field.clone()));
                m.insert("as".into(), Value::String(output.clone()));
            }
            TransformOp::Fold { fields, key, value } => {
                m.insert("fold".into(), strings(fields));
                m.insert("as".into(), strings(&[key.clone(), value.clone()]));
            }
        }
        sorted(m)
    }
}

impl Predicate {
    pub fn to_value(&self) -> Value {
        let mut m = self.extras.clone();
        m.insert("field".into(), Value::String(self.field.clone()));
        let (key, val) = match &self.test {
            PredicateTest::Equal(v) => ("equal", v.clone()),
            PredicateTest::OneOf(vs) => ("oneOf", Value::Array(vs.clone())),
            PredicateTest::Range(lo, hi) => ("range", Value::Array(vec![lo.clone(), hi.clone()])),
            PredicateTest::Gt(v) => ("gt", v.clone()),
            PredicateTest::Gte(v) => ("gte", v.clone()),
            PredicateTest::Lt(v) => ("lt", v.clone()),
            PredicateTest::Lte(v) => ("lte", v.clone()),
        };
        m.insert(key.into(), val);
        sorted(m)
    }
}
