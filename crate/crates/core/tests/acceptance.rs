//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails or exceeds its time budget.

mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use retarget::depgraph::{stale_nodes, DependencyGraph, Edge, Node, NodeKind, Relation};
use retarget::harness::{
    export_matrix, load_corpus, load_datasets, run_matrix, Condition, ExportFormat, Outcome,
};
use retarget::linter::lint;
use retarget::mapper::{extract_roles, plan_mapping};
use retarget::profiler::{ColumnProfile, Dataset, DatasetProfile, Table};
use retarget::rewriter::retarget;
use retarget::spec::{
    parse_spec, serialize_spec, validate_against, Channel, Columns, DataSource, Domain, Kind,
    SchemaViolation, TransformKind,
};

use common::{corpus, corpus_spec, csv_column, fixtures, target};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("ridgeline-onto-unemployment", Duration::from_secs(5), ridgeline_onto_unemployment),
        ("identity-retarget", Duration::from_secs(10), identity),
        ("staleness-oracle", Duration::from_secs(5), staleness_oracle),
        ("assignment-oracle", Duration::from_secs(10), assignment_oracle),
        ("resolution-property", Duration::MAX, resolution),
        ("matrix-bookkeeping", Duration::from_secs(60), matrix),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            })
            .and_then(|detail| {
                let took = start.elapsed();
                if took > limit {
                    Err(format!("took {took:.2?}, limit {limit:?}"))
                } else {
                    Ok(detail)
                }
            });
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {name} ({took:.2?}) {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({took:.2?}) {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn grouped_mean_extent() -> (f64, f64) {
    let path = fixtures().join("datasets/unemployment.csv");
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (g, v) in csv_column(&path, "division").into_iter().zip(csv_column(&path, "unemployment")) {
        let e = acc.entry(g).or_default();
        e.0 += v.parse::<f64>().unwrap();
        e.1 += 1;
    }
    let means = acc.values().map(|(s, n)| s / *n as f64);
    means.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)))
}

fn ridgeline_onto_unemployment() -> Check {
    let spec = corpus_spec("ridgeline");
    let data = target("unemployment.csv");
    let out = retarget(&spec, &data, &[], None).map_err(|e| e.to_string())?;
    let s = &out.spec;

    ensure!(s.data == Some(DataSource::url("unemployment.csv")), "data location {:?}", s.data);
    let x = &s.encodings[&Channel::X];
    ensure!(x.field == "date" && x.kind == Kind::Temporal, "x is {}:{:?}", x.field, x.kind);
    let facet = s.facet.as_ref().ok_or("facet missing")?;
    ensure!(
        facet.field == "division" && facet.kind == Kind::Nominal,
        "facet is {}:{:?}",
        facet.field,
        facet.kind
    );
    ensure!(
        facet.guide.as_ref().and_then(|g| g.format.as_ref()).is_none(),
        "facet format survived"
    );
    let kinds: Vec<TransformKind> = s.transforms.iter().map(|t| t.kind()).collect();
    ensure!(
        !kinds.contains(&TransformKind::Bin) && !kinds.contains(&TransformKind::TimeUnit),
        "stale transforms remain: {kinds:?}"
    );
    let color = &s.encodings[&Channel::Color];
    let producer = s
        .transforms
        .iter()
        .find(|t| t.outputs().contains(&color.field))
        .ok_or("color is not computed by a transform")?;
    ensure!(
        producer.kind() == TransformKind::Aggregate && producer.value_inputs() == ["unemployment"],
        "color chain reads {:?}",
        producer.value_inputs()
    );
    ensure!(color.guide_visible(), "color legend hidden");
    let (lo, hi) = grouped_mean_extent();
    match color.scale.as_ref().and_then(|sc| sc.domain.as_ref()) {
        Some(Domain::Numeric { lo: a, hi: b }) => ensure!(
            (a - lo).abs() <= 1e-9 && (b - hi).abs() <= 1e-9,
            "domain [{a}, {b}] vs grouped means [{lo}, {hi}]"
        ),
        other => return Err(format!("color domain {other:?}")),
    }
    ensure!(out.log.reproduces(&spec, s), "log does not replay");
    Ok(format!("{} edits", out.log.len()))
}

fn identity() -> Check {
    let charts = corpus();
    for (name, spec, data) in &charts {
        let out = retarget(spec, data, &[], None).map_err(|e| format!("{name}: {e}"))?;
        let mut restored = out.spec.clone();
        restored.data = spec.data.clone();
        ensure!(
            serialize_spec(&restored) == serialize_spec(spec),
            "{name}: output differs beyond the data location"
        );
        let report = lint(&out.spec, &data.profile, &data.table);
        ensure!(
            report.counts.syntactic == 0 && report.counts.semantic == 0,
            "{name}: {:?}",
            report.findings
        );
    }
    Ok(format!("{} specs", charts.len()))
}

// ---------------------------------------------------------------------------
// Staleness: random dataflow DAGs against brute-force reverse reachability.

fn random_graph(rng: &mut ChaCha8Rng) -> (DependencyGraph, BTreeSet<String>) {
    let n = rng.gen_range(1..=12);
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let node = |id: String, kind, op| Node { id: id.clone(), kind, name: id, op };
    for i in 0..n {
        let fields: Vec<String> = nodes.iter().filter(|n| n.kind.is_field()).map(|n| n.id.clone()).collect();
        let producers: Vec<String> = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Transform && n.op != Some(TransformKind::Filter))
            .map(|n| n.id.clone())
            .collect();
        match rng.gen_range(0..3) {
            0 => nodes.push(node(format!("s{i}"), NodeKind::SourceField, None)),
            1 if !producers.is_empty() => {
                let id = format!("d{i}");
                let from = producers.choose(rng).unwrap().clone();
                edges.push(Edge { from, to: id.clone(), relation: Relation::Derives });
                nodes.push(node(id, NodeKind::DerivedField, None));
            }
            _ => {
                let op = *[TransformKind::Calculate, TransformKind::Aggregate, TransformKind::Filter]
                    .choose(rng)
                    .unwrap();
                let id = format!("t{i}");
                let k = rng.gen_range(0..=fields.len().min(3));
                for from in fields.choose_multiple(rng, k) {
                    edges.push(Edge { from: from.clone(), to: id.clone(), relation: Relation::Consumes });
                }
                nodes.push(node(id, NodeKind::Transform, Some(op)));
            }
        }
    }
    let live = nodes
        .iter()
        .filter(|n| n.kind.is_field() && rng.gen_bool(0.4))
        .map(|n| n.name.clone())
        .collect();
    (DependencyGraph::from_parts(nodes, edges).expect("generated graph is valid"), live)
}

/// Everything from which one of `start` can be reached.
fn reverse_reach(g: &DependencyGraph, start: impl IntoIterator<Item = String>) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<String> = start.into_iter().collect();
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id.clone()) {
            continue;
        }
        for e in g.edges().iter().filter(|e| e.to == id) {
            queue.push_back(e.from.clone());
        }
    }
    seen
}

fn stale_oracle(g: &DependencyGraph, live: &BTreeSet<String>) -> BTreeSet<String> {
    let reached = reverse_reach(g, live.iter().cloned());
    // A filter stays unless it reads a derived field nothing live needs.
    let live_filters = g.nodes().iter().filter(|n| {
        n.op == Some(TransformKind::Filter)
            && g.edges().iter().filter(|e| e.to == n.id).all(|e| {
                let from = g.node(&e.from).unwrap();
                from.kind != NodeKind::DerivedField || reached.contains(&from.id)
            })
    });
    let keep = reverse_reach(g, live.iter().cloned().chain(live_filters.map(|n| n.id.clone())));
    g.nodes().iter().filter(|n| !keep.contains(&n.id)).map(|n| n.id.clone()).collect()
}

fn staleness_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57a1e);
    let mut stale = 0;
    for trial in 0..1000 {
        let (g, live) = random_graph(&mut rng);
        let got = stale_nodes(&g, &live).ids();
        let want = stale_oracle(&g, &live);
        ensure!(got == want, "trial {trial}: got {got:?}, oracle {want:?}, graph {}", g.to_text());
        stale += got.len();
    }
    Ok(format!("1000/1000 graphs, {stale} stale nodes"))
}

// ---------------------------------------------------------------------------
// Assignment: random small instances against exhaustive enumeration.

const VOCAB: &[&str] = &[
    "price", "total", "sales", "region", "year", "date", "count", "mean", "rate", "city", "name",
    "score", "age", "group", "value", "temp",
];

fn random_name(rng: &mut ChaCha8Rng) -> String {
    let a = VOCAB.choose(rng).unwrap();
    let b = VOCAB.choose(rng).unwrap();
    format!("{a}_{b}")
}

fn kind_compat(a: Kind, b: Kind) -> f64 {
    use Kind::*;
    match (a, b) {
        _ if a == b => 1.0,
        (Quantitative, Ordinal) | (Ordinal, Quantitative) | (Ordinal, Nominal) | (Nominal, Ordinal) => 0.5,
        (Temporal, Quantitative) | (Quantitative, Temporal) => 0.25,
        _ => 0.0,
    }
}

fn jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<&str> = a.split('_').collect();
    let tb: BTreeSet<&str> = b.split('_').collect();
    ta.intersection(&tb).count() as f64 / ta.union(&tb).count() as f64
}

struct Instance {
    channels: Vec<(Channel, String, Kind, usize)>,
    columns: Vec<ColumnProfile>,
}

impl Instance {
    fn score(&self, i: usize, col: &ColumnProfile) -> Option<f64> {
        let (ch, field, kind, distinct) = &self.channels[i];
        let discrete = matches!(kind, Kind::Nominal | Kind::Ordinal)
            || matches!(ch, Channel::Row | Channel::Column | Channel::Shape);
        let card = if discrete {
            let d = ((distinct + 1) as f64).log10() - ((col.distinct_count + 1) as f64).log10();
            (1.0 - d.abs()).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let s = 0.6 * kind_compat(*kind, col.kind) + 0.25 * jaccard(field, &col.name) + 0.15 * card;
        let ok = !col.list_valued
            && match ch {
                Channel::Row | Channel::Column => matches!(col.kind, Kind::Nominal | Kind::Ordinal),
                _ => s >= 0.2,
            };
        ok.then_some(s)
    }

    fn best(&self, i: usize, used: &mut Vec<bool>) -> f64 {
        if i == self.channels.len() {
            return 0.0;
        }
        let mut best = self.best(i + 1, used);
        for c in 0..self.columns.len() {
            if used[c] {
                continue;
            }
            if let Some(s) = self.score(i, &self.columns[c]) {
                used[c] = true;
                best = best.max(s + self.best(i + 1, used));
                used[c] = false;
            }
        }
        best
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let kinds = [Kind::Quantitative, Kind::Nominal, Kind::Ordinal, Kind::Temporal];
    let pool = [
        Channel::X,
        Channel::Y,
        Channel::Color,
        Channel::Size,
        Channel::Shape,
        Channel::Opacity,
        Channel::Row,
        Channel::Column,
    ];
    let k = rng.gen_range(1..=6);
    let mut fields = BTreeSet::new();
    let channels = pool
        .choose_multiple(rng, k)
        .map(|&ch| {
            let kind = if ch.is_structural() {
                *[Kind::Nominal, Kind::Ordinal].choose(rng).unwrap()
            } else {
                *kinds.choose(rng).unwrap()
            };
            let mut field = random_name(rng);
            while !fields.insert(field.clone()) {
                field = random_name(rng);
            }
            (ch, field, kind, rng.gen_range(1..200))
        })
        .collect();
    let m = rng.gen_range(1..=8);
    let mut names = BTreeSet::new();
    while names.len() < m {
        let n = random_name(rng);
        if !fields.contains(&n) {
            names.insert(n);
        }
    }
    let mut columns: Vec<ColumnProfile> = names
        .into_iter()
        .map(|name| ColumnProfile {
            name,
            kind: *kinds.choose(rng).unwrap(),
            row_count: 500,
            null_count: 0,
            distinct_count: rng.gen_range(1..500),
            numeric: None,
            temporal: None,
            samples: Vec::new(),
            list_valued: rng.gen_bool(0.05),
            warning: None,
        })
        .collect();
    columns.shuffle(rng);
    Instance { channels, columns }
}

fn instance_spec(inst: &Instance) -> String {
    let enc: serde_json::Map<String, serde_json::Value> = inst
        .channels
        .iter()
        .map(|(ch, field, kind, _)| {
            (ch.as_str().to_string(), serde_json::json!({"field": field, "type": kind.word()}))
        })
        .collect();
    serde_json::json!({"data": {"url": "source.csv"}, "mark": "point", "encoding": enc}).to_string()
}

fn assignment_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa551);
    let mut drops = 0;
    for trial in 0..200 {
        let inst = random_instance(&mut rng);
        let spec = parse_spec(&instance_spec(&inst)).map_err(|e| format!("trial {trial}: {e}"))?;
        let graph = retarget::depgraph::build_graph(&spec).map_err(|e| e.to_string())?;
        let mut roles = extract_roles(&spec, &graph);
        for r in &mut roles.roles {
            r.cardinality = inst.channels.iter().find(|c| c.0 == r.channel).map(|c| c.3);
        }
        let profile = DatasetProfile {
            source: "target.csv".into(),
            row_count: 500,
            columns: inst.columns.clone(),
        };
        let plan = plan_mapping(&roles, &profile, &[], None).map_err(|e| format!("trial {trial}: {e}"))?;

        let mut total = 0.0;
        let mut taken = BTreeSet::new();
        for a in &plan.assignments {
            let Some(col) = a.new_field.as_deref() else { continue };
            ensure!(taken.insert(col.to_string()), "trial {trial}: {col} assigned twice");
            let i = inst.channels.iter().position(|c| c.0 == a.channel).unwrap();
            let c = inst.columns.iter().find(|c| c.name == col).unwrap();
            let s = inst.score(i, c).ok_or_else(|| format!("trial {trial}: ineligible {col} for {:?}", a.channel))?;
            ensure!((s - a.score).abs() < 1e-9, "trial {trial}: score {} vs oracle {s}", a.score);
            total += s;
        }
        drops += plan.assignments.iter().filter(|a| a.dropped()).count();
        let best = inst.best(0, &mut vec![false; inst.columns.len()]);
        ensure!((total - best).abs() < 1e-9, "trial {trial}: plan total {total}, optimum {best}");

        // Column order in the profile must not matter.
        let mut shuffled = profile.clone();
        shuffled.columns.shuffle(&mut rng);
        let again = plan_mapping(&roles, &shuffled, &[], None).map_err(|e| e.to_string())?;
        ensure!(again.assignments == plan.assignments, "trial {trial}: plan depends on column order");
    }
    Ok(format!("200/200 instances, {drops} dropped channels"))
}

// ---------------------------------------------------------------------------
// Resolution: corpus specs onto random column subsets of the fixtures.

fn permuted(data: &Dataset, rng: &mut ChaCha8Rng, source: String) -> Dataset {
    let table = &data.table;
    let n = table.columns().len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(rng.gen_range(1..=n));
    let columns = idx.iter().map(|&i| table.columns()[i].clone()).collect();
    let mut rows: Vec<Vec<_>> = table.rows().iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
    rows.shuffle(rng);
    Dataset::new(source, Table::new(columns, rows).unwrap())
}

fn resolution() -> Check {
    let charts = corpus();
    let mut pool: Vec<Dataset> = charts.iter().map(|(_, _, d)| d.clone()).collect();
    pool.extend(common::targets());
    let mut rng = ChaCha8Rng::seed_from_u64(0x2e50);
    let (mut drops, mut removals) = (0, 0);
    for trial in 0..500 {
        let (name, spec, _) = charts.choose(&mut rng).unwrap();
        let base = pool.choose(&mut rng).unwrap();
        let data = permuted(base, &mut rng, format!("{}-{trial}.csv", base.profile.source));
        let label = format!("trial {trial}: {name} -> {:?}", data.profile.column_names());
        let out = retarget(spec, &data, &[], None).map_err(|e| format!("{label}: {e}"))?;
        let columns = Columns::known(data.profile.column_names());
        let unresolved: Vec<_> = validate_against(&out.spec, &columns)
            .into_iter()
            .filter(|v| matches!(v, SchemaViolation::UnresolvedField { .. }))
            .collect();
        ensure!(unresolved.is_empty(), "{label}: {unresolved:?}");
        let replayed = out.log.replay(spec).map_err(|e| format!("{label}: {e}"))?;
        ensure!(serialize_spec(&replayed) == serialize_spec(&out.spec), "{label}: replay differs");
        drops += out.plan.assignments.iter().filter(|a| a.dropped()).count();
        removals += out.plan.transforms_to_remove.len();
    }
    Ok(format!("500/500 plans, {drops} dropped channels, {removals} removed transforms"))
}

// ---------------------------------------------------------------------------

fn matrix() -> Check {
    let charts = load_corpus(&fixtures().join("corpus")).map_err(|e| e.to_string())?;
    let datasets = load_datasets(&fixtures().join("datasets")).map_err(|e| e.to_string())?;
    let conditions = [Condition::Baseline, Condition::Pipeline];
    let run = |workers| {
        let m = run_matrix(&charts, &datasets, &conditions, None, workers).map_err(|e| e.to_string())?;
        Ok::<_, String>((m.clone(), export_matrix(&m, ExportFormat::Json), export_matrix(&m, ExportFormat::Csv)))
    };
    let (m, json, csv) = run(8)?;
    ensure!(m.cells.len() == 64, "{} cells", m.cells.len());
    for c in &m.cells {
        match c.condition {
            Condition::Baseline => ensure!(c.outcome == Outcome::Skipped, "baseline cell ran"),
            Condition::Pipeline => ensure!(
                c.outcome != Outcome::Skipped && c.report.is_some(),
                "pipeline {} {} not executed",
                c.chart,
                c.dataset
            ),
        }
    }
    for workers in [8, 1] {
        let (_, j, c) = run(workers)?;
        ensure!(j == json && c == csv, "export differs with {workers} workers");
    }

    let raw: serde_json::Value = serde_json::from_slice(&json).map_err(|e| e.to_string())?;
    for cond in ["baseline", "pipeline"] {
        let cells: Vec<&serde_json::Value> = raw["cells"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["condition"] == cond)
            .collect();
        let rendered = cells.iter().filter(|c| c["outcome"] == "rendered").count();
        let reports: Vec<&serde_json::Value> = cells.iter().filter_map(|c| c.get("report")).collect();
        let sum = |axis: &str| reports.iter().map(|r| r["counts"][axis].as_u64().unwrap()).sum::<u64>();
        let norm = &raw["normalized"][cond];
        ensure!(norm["rendered"] == rendered && norm["executed"] == reports.len(), "{cond}: counts");
        for axis in ["semantic", "pragmatic"] {
            let per = &norm[format!("{axis}_per_rendered")];
            let want = (rendered > 0).then(|| sum(axis) as f64 / rendered as f64);
            ensure!(per.as_f64() == want, "{cond}: {axis} per rendered {per} vs {want:?}");
        }
    }
    Ok(format!("{} cells", m.cells.len()))
}
