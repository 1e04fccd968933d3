use std::collections::BTreeMap;
use std::fmt;

use serde_json::{Map, Value};

use super::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// JSON pointer of the offending value; empty for syntax errors.
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ if !self.path.is_empty() => write!(f, "{}: {}", self.path, self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl ParseErrors {
    pub fn messages(&self) -> Vec<String> {
        self.0.iter().map(|e| e.message.clone()).collect()
    }
}

pub fn parse_spec(text: &str) -> Result<ChartSpec, ParseErrors> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        ParseErrors(vec![ParseError {
            path: String::new(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        }])
    })?;
    ChartSpec::from_value(&value)
}

impl ChartSpec {
    pub fn from_value(value: &Value) -> Result<ChartSpec, ParseErrors> {
        let value = super::serialize::canonical_json(value);
        let mut cx = Cx::default();
        let spec = cx.spec(&value, "");
        match spec {
            Some(s) if cx.errors.is_empty() => Ok(s),
            _ => Err(ParseErrors(cx.errors)),
        }
    }
}

impl Transform {
    pub fn from_value(value: &Value) -> Result<Transform, ParseErrors> {
        let value = super::serialize::canonical_json(value);
        let mut cx = Cx::default();
        match cx.transform(&value, "") {
            Some(t) if cx.errors.is_empty() => Ok(t),
            _ => Err(ParseErrors(cx.errors)),
        }
    }
}

impl Serialize for Transform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Transform::from_value(&v).map_err(serde::de::Error::custom)
    }
}

#[derive(Default)]
struct Cx {
    errors: Vec<ParseError>,
}

impl Cx {
    fn err<T>(&mut self, path: &str, message: impl Into<String>) -> Option<T> {
        self.errors.push(ParseError {
            path: path.to_string(),
            line: None,
            column: None,
            message: message.into(),
        });
        None
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v.as_object() {
            Some(o) => Some(o),
            None => self.err(path, "expected an object"),
        }
    }

    fn string(&mut self, v: &Value, path: &str) -> Option<String> {
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => self.err(path, "expected a string"),
        }
    }

    fn strings(&mut self, v: &Value, path: &str) -> Option<Vec<String>> {
        let arr = match v.as_array() {
            Some(a) => a,
            None => return self.err(path, "expected a list of strings"),
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, item) in arr.iter().enumerate() {
            out.push(self.string(item, &format!("{path}/{i}"))?);
        }
        Some(out)
    }

    fn spec(&mut self, v: &Value, path: &str) -> Option<ChartSpec> {
        let obj = self.object(v, path)?;
        let mut spec = ChartSpec::default();
        for (key, val) in obj {
            let p = format!("{path}/{key}");
            match key.as_str() {
                "data" => spec.data = self.data(val, &p),
                "transform" => {
                    let arr = match val.as_array() {
                        Some(a) => a,
                        None => {
                            self.err::<()>(&p, "expected a list of transforms");
                            continue;
                        }
                    };
                    for (i, t) in arr.iter().enumerate() {
                        if let Some(t) = self.transform(t, &format!("{p}/{i}")) {
                            spec.transforms.push(t);
                        }
                    }
                }
                "mark" => spec.mark = self.mark(val, &p),
                "encoding" => {
                    let Some(enc) = self.object(val, &p) else { continue };
                    let mut map = BTreeMap::new();
                    for (ch, e) in enc {
                        let cp = format!("{p}/{ch}");
                        let channel = match ch.parse::<Channel>() {
                            Ok(c) => c,
                            Err(m) => {
                                self.err::<()>(&cp, m);
                                continue;
                            }
                        };
                        if let Some(e) = self.encoding(e, channel, &cp) {
                            map.insert(channel, e);
                        }
                    }
                    spec.encodings = map;
                }
                "facet" => spec.facet = self.encoding(val, Channel::Facet, &p),
                "layer" => {
                    let Some(arr) = val.as_array() else {
                        self.err::<()>(&p, "expected a list of layer specs");
                        continue;
                    };
                    let mut layers = Vec::new();
                    for (i, l) in arr.iter().enumerate() {
                        if let Some(l) = self.spec(l, &format!("{p}/{i}")) {
                            layers.push(l);
                        }
                    }
                    spec.layers = Some(layers);
                }
                "title" => spec.title = self.title(val, &p),
                "width" => spec.width = self.pixels(val, &p),
                "height" => spec.height = self.pixels(val, &p),
                _ => {
                    spec.extras.insert(key.clone(), val.clone());
                }
            }
        }
        Some(spec)
    }

    fn pixels(&mut self, v: &Value, path: &str) -> Option<u32> {
        match v.as_u64().and_then(|n| u32::try_from(n).ok()) {
            Some(n) => Some(n),
            None => self.err(path, "expected a non-negative integer pixel size"),
        }
    }

    fn title(&mut self, v: &Value, path: &str) -> Option<Title> {
        match v {
            Value::String(s) => Some(Title {
                text: s.clone(),
                extras: Extras::new(),
            }),
            Value::Object(o) => {
                let text = match o.get("text") {
                    Some(t) => self.string(t, &format!("{path}/text"))?,
                    None => return self.err(path, "title object without text"),
                };
                let mut extras = o.clone();
                extras.remove("text");
                Some(Title { text, extras })
            }
            _ => self.err(path, "expected a title string or object"),
        }
    }

    fn data(&mut self, v: &Value, path: &str) -> Option<DataSource> {
        let obj = self.object(v, path)?;
        let mut extras = obj.clone();
        let url = extras.remove("url");
        let values = extras.remove("values");
        let location = match (url, values) {
            (Some(u), None) => DataLocation::Url(self.string(&u, &format!("{path}/url"))?),
            (None, Some(Value::Array(rows))) => {
                let mut out = Vec::with_capacity(rows.len());
                for (i, r) in rows.iter().enumerate() {
                    out.push(self.object(r, &format!("{path}/values/{i}"))?.clone());
                }
                DataLocation::Inline(out)
            }
            (None, Some(_)) => return self.err(path, "data values must be a list of records"),
            (Some(_), Some(_)) => return self.err(path, "data has both url and values"),
            (None, None) => return self.err(path, "data needs either url or values"),
        };
        Some(DataSource { location, extras })
    }

    fn mark(&mut self, v: &Value, path: &str) -> Option<MarkDef> {
        match v {
            Value::String(s) => Some(MarkDef::new(s.clone())),
            Value::Object(o) => {
                let mut extras = o.clone();
                let ty = match extras.remove("type") {
                    Some(t) => self.string(&t, &format!("{path}/type"))?,
                    None => return self.err(path, "mark object without type"),
                };
                Some(MarkDef {
                    mark_type: ty,
                    object_form: true,
                    extras,
                })
            }
            _ => self.err(path, "expected a mark string or object"),
        }
    }

    fn encoding(&mut self, v: &Value, channel: Channel, path: &str) -> Option<Encoding> {
        let obj = self.object(v, path)?;
        let mut extras = obj.clone();
        let field = match extras.remove("field") {
            Some(f) => self.string(&f, &format!("{path}/field"))?,
            None => return self.err(path, "encoding without field"),
        };
        let kind = match extras.remove("type") {
            Some(t) => {
                let s = self.string(&t, &format!("{path}/type"))?;
                match s.parse::<Kind>() {
                    Ok(k) => k,
                    Err(m) => return self.err(&format!("{path}/type"), m),
                }
            }
            None => return self.err(path, "encoding without type"),
        };
        let aggregate = match extras.remove("aggregate") {
            Some(a) => {
                let s = self.string(&a, &format!("{path}/aggregate"))?;
                match s.parse::<AggregateOp>() {
                    Ok(op) => Some(op),
                    Err(m) => return self.err(&format!("{path}/aggregate"), m),
                }
            }
            None => None,
        };
        let scale = match extras.remove("scale") {
            Some(Value::Null) => {
                extras.insert("scale".into(), Value::Null);
                None
            }
            Some(s) => Some(self.scale(&s, &format!("{path}/scale"))?),
            None => None,
        };
        let guide = match channel.guide_key().and_then(|k| extras.remove(k)) {
            Some(g) => Some(self.guide(&g, &format!("{path}/{}", channel.guide_key()?))?),
            None => None,
        };
        Some(Encoding {
            field,
            kind,
            aggregate,
            scale,
            guide,
            extras,
        })
    }

    fn scale(&mut self, v: &Value, path: &str) -> Option<ScaleDef> {
        let obj = self.object(v, path)?;
        let mut extras = obj.clone();
        let scale_type = match extras.remove("type") {
            Some(t) => Some(ScaleType::parse(&self.string(&t, &format!("{path}/type"))?)),
            None => None,
        };
        let domain = extras.remove("domain").map(|d| domain_of(&d));
        let range = extras.remove("range");
        Some(ScaleDef {
            scale_type,
            domain,
            range,
            extras,
        })
    }

    fn guide(&mut self, v: &Value, path: &str) -> Option<GuideDef> {
        if v.is_null() {
            return Some(GuideDef::hidden());
        }
        let obj = self.object(v, path)?;
        let mut extras = obj.clone();
        let title = match extras.remove("title") {
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                extras.insert("title".into(), other);
                None
            }
            None => None,
        };
        let format = match extras.remove("format") {
            Some(f) => Some(self.string(&f, &format!("{path}/format"))?),
            None => None,
        };
        let label_angle = match extras.remove("labelAngle") {
            Some(a) => match a.as_f64() {
                Some(x) => Some(x),
                None => return self.err(&format!("{path}/labelAngle"), "expected degrees"),
            },
            None => None,
        };
        Some(GuideDef {
            visible: true,
            title,
            format,
            label_angle,
            extras,
        })
    }

    fn transform(&mut self, v: &Value, path: &str) -> Option<Transform> {
        let obj = self.object(v, path)?;
        let mut extras = obj.clone();
        let op = if let Some(f) = extras.remove("filter") {
            TransformOp::Filter(self.predicate(&f, &format!("{path}/filter"))?)
        } else if obj.contains_key("aggregate") || obj.contains_key("joinaggregate") {
            let join = obj.contains_key("joinaggregate");
            let key = if join { "joinaggregate" } else { "aggregate" };
            let list = extras.remove(key).unwrap_or(Value::Null);
            let Some(items) = list.as_array() else {
                return self.err(&format!("{path}/{key}"), "expected a list of aggregate ops");
            };
            let mut ops = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let ip = format!("{path}/{key}/{i}");
                let o = self.object(item, &ip)?;
                let op_name = self.string(o.get("op").unwrap_or(&Value::Null), &format!("{ip}/op"))?;
                let op = match op_name.parse::<AggregateOp>() {
                    Ok(op) => op,
                    Err(m) => return self.err(&format!("{ip}/op"), m),
                };
                let field = match o.get("field") {
                    Some(f) => Some(self.string(f, &format!("{ip}/field"))?),
                    None if op == AggregateOp::Count => None,
                    None => return self.err(&ip, "aggregate op without field"),
                };
                let output = self.string(o.get("as").unwrap_or(&Value::Null), &format!("{ip}/as"))?;
                if o.keys().any(|k| !matches!(k.as_str(), "op" | "field" | "as")) {
                    return self.err(&ip, "unsupported key in aggregate op");
                }
                ops.push(AggregateField { op, field, output });
            }
            if ops.is_empty() {
                return self.err(path, "aggregate without ops");
            }
            let groupby = match extras.remove("groupby") {
                Some(g) => self.strings(&g, &format!("{path}/groupby"))?,
                None => Vec::new(),
            };
            TransformOp::Aggregate { ops, groupby, join }
        } else if let Some(c) = extras.remove("calculate") {
            let text = self.string(&c, &format!("{path}/calculate"))?;
            let expr = match Expr::parse(&text) {
                Ok(e) => e,
                Err(e) => return self.err(&format!("{path}/calculate"), e.to_string()),
            };
            let output = match extras.remove("as") {
                Some(a) => self.string(&a, &format!("{path}/as"))?,
                None => return self.err(path, "calculate without as"),
            };
            TransformOp::Calculate { expr, output }
        } else if let Some(params) = extras.remove("bin") {
            if !(params == Value::Bool(true) || params.is_object()) {
                return self.err(&format!("{path}/bin"), "bin must be true or an object");
            }
            let field = match extras.remove("field") {
                Some(f) => self.string(&f, &format!("{path}/field"))?,
                None => return self.err(path, "bin without field"),
            };
            let (start, end, paired) = match extras.remove("as") {
                Some(Value::String(s)) => (s.clone(), format!("{s}_end"), false),
                Some(a @ Value::Array(_)) => {
                    let names = self.strings(&a, &format!("{path}/as"))?;
                    if names.len() != 2 {
                        return self.err(&format!("{path}/as"), "bin as needs two names");
                    }
                    (names[0].clone(), names[1].clone(), true)
                }
                _ => return self.err(path, "bin without as"),
            };
            TransformOp::Bin {
                field,
                params,
                start,
                end,
                paired,
            }
        } else if let Some(u) = extras.remove("timeUnit") {
            let unit = self.string(&u, &format!("{path}/timeUnit"))?;
            if !crate::dataflow::TIME_UNITS.contains(&unit.as_str()) {
                return self.err(&format!("{path}/timeUnit"), format!("unsupported time unit: {unit}"));
            }
            let field = match extras.remove("field") {
                Some(f) => self.string(&f, &format!("{path}/field"))?,
                None => return self.err(path, "timeUnit without field"),
            };
            let output = match extras.remove("as") {
                Some(a) => self.string(&a, &format!("{path}/as"))?,
                None => return self.err(path, "timeUnit without as"),
            };
            TransformOp::TimeUnit {
                unit,
                field,
                output,
            }
        } else if let Some(f) = extras.remove("fold") {
            let fields = self.strings(&f, &format!("{path}/fold"))?;
            let (key, value) = match extras.remove("as") {
                Some(a) => {
                    let names = self.strings(&a, &format!("{path}/as"))?;
                    if names.len() != 2 {
                        return self.err(&format!("{path}/as"), "fold as needs two names");
                    }
                    (names[0].clone(), names[1].clone())
                }
                None => ("key".to_string(), "value".to_string()),
            };
            TransformOp::Fold { fields, key, value }
        } else {
            let name = obj
                .keys()
                .find(|k| !matches!(k.as_str(), "as" | "field" | "groupby"))
                .cloned()
                .unwrap_or_default();
            return self.err(path, format!("unknown transform kind: {name}"));
        };
        Some(Transform { op, extras })
    }

    fn predicate(&mut self, v: &Value, path: &str) -> Option<Predicate> {
        let Some(obj) = v.as_object() else {
            return self.err(path, "filter must be a field predicate object");
        };
        let mut extras = obj.clone();
        let field = match extras.remove("field") {
            Some(f) => self.string(&f, &format!("{path}/field"))?,
            None => return self.err(path, "filter predicate without field"),
        };
        let mut tests = Vec::new();
        for key in ["equal", "oneOf", "range", "gt", "gte", "lt", "lte"] {
            if let Some(val) = extras.remove(key) {
                tests.push((key, val));
            }
        }
        if tests.len() != 1 {
            return self.err(path, "filter predicate needs exactly one test");
        }
        let (key, val) = tests.pop()?;
        let test = match key {
            "equal" => PredicateTest::Equal(val),
            "oneOf" => match val {
                Value::Array(items) => PredicateTest::OneOf(items),
                _ => return self.err(&format!("{path}/oneOf"), "expected a list"),
            },
            "range" => match val.as_array() {
                Some(items) if items.len() == 2 => {
                    PredicateTest::Range(items[0].clone(), items[1].clone())
                }
                _ => return self.err(&format!("{path}/range"), "expected [lo, hi]"),
            },
            "gt" => PredicateTest::Gt(val),
            "gte" => PredicateTest::Gte(val),
            "lt" => PredicateTest::Lt(val),
            _ => PredicateTest::Lte(val),
        };
        Some(Predicate {
            field,
            test,
            extras,
        })
    }
}

pub(crate) fn domain_of(v: &Value) -> Domain {
    if let Some(items) = v.as_array() {
        if items.len() == 2 {
            if let (Some(lo), Some(hi)) = (items[0].as_f64(), items[1].as_f64()) {
                return Domain::Numeric { lo, hi };
            }
        }
        if !items.is_empty() && items.iter().all(Value::is_string) {
            return Domain::Categories(
                items
                    .iter()
                    .filter_map(|s| s.as_str().map(str::to_string))
                    .collect(),
            );
        }
    }
    Domain::Other(v.clone())
}
