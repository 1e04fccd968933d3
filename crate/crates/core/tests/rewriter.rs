mod common;

use std::collections::BTreeMap;

use retarget::mapper::Flag;
use retarget::profiler::{ingest_table, Dataset, TableFormat};
use retarget::rewriter::{refresh_guides, refresh_scales, retarget, EditKind, TOP_N};
use retarget::spec::{
    parse_spec, serialize_spec, Channel, DataSource, Domain, Kind, PredicateTest, TransformKind,
    TransformOp,
};

use common::{corpus, corpus_spec, csv_column, fixtures, target};

/// Extent of per-division means, computed straight from the CSV text.
fn grouped_mean_extent() -> (f64, f64) {
    let path = fixtures().join("datasets/unemployment.csv");
    let groups = csv_column(&path, "division");
    let values = csv_column(&path, "unemployment");
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (g, v) in groups.into_iter().zip(values) {
        let e = acc.entry(g).or_default();
        e.0 += v.parse::<f64>().unwrap();
        e.1 += 1;
    }
    let means: Vec<f64> = acc.values().map(|(s, n)| s / *n as f64).collect();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[test]
fn ridgeline_onto_unemployment() {
    let spec = corpus_spec("ridgeline");
    let data = target("unemployment.csv");
    let out = retarget(&spec, &data, &[], None).unwrap();
    let s = &out.spec;

    assert_eq!(s.data, Some(DataSource::url("unemployment.csv")));
    let x = &s.encodings[&Channel::X];
    assert_eq!((x.field.as_str(), x.kind), ("date", Kind::Temporal));

    let facet = s.facet.as_ref().unwrap();
    assert_eq!((facet.field.as_str(), facet.kind), ("division", Kind::Nominal));
    assert!(facet.guide.as_ref().and_then(|g| g.format.as_ref()).is_none());

    let kinds: Vec<TransformKind> = s.transforms.iter().map(|t| t.kind()).collect();
    assert!(!kinds.contains(&TransformKind::Bin));
    assert!(!kinds.contains(&TransformKind::TimeUnit));

    let color = &s.encodings[&Channel::Color];
    let producer = s
        .transforms
        .iter()
        .find(|t| t.outputs().contains(&color.field))
        .expect("color reads an aggregate output");
    assert_eq!(producer.value_inputs(), vec!["unemployment".to_string()]);
    assert_eq!(producer.groupby(), ["division".to_string()]);
    assert!(color.guide_visible());

    let (lo, hi) = grouped_mean_extent();
    match color.scale.as_ref().and_then(|sc| sc.domain.as_ref()) {
        Some(Domain::Numeric { lo: a, hi: b }) => {
            assert!((a - lo).abs() < 1e-9 && (b - hi).abs() < 1e-9, "{a} {b} vs {lo} {hi}");
        }
        other => panic!("unexpected domain {other:?}"),
    }

    let kinds = out.log.kinds();
    for k in [
        EditKind::DataReplaced,
        EditKind::FieldSubst,
        EditKind::TransformRemoved,
        EditKind::FormatRemoved,
        EditKind::LegendEnabled,
        EditKind::DomainUpdated,
    ] {
        assert!(kinds.contains(&k), "missing {k:?} in {kinds:?}");
    }
    assert!(out.log.reproduces(&spec, s));
}

#[test]
fn identity_changes_only_the_data_location() {
    for (name, spec, data) in corpus() {
        let out = retarget(&spec, &data, &[], None).unwrap();
        let mut expected = spec.clone();
        expected.data = Some(DataSource::url(data.profile.source.clone()));
        assert_eq!(serialize_spec(&out.spec), serialize_spec(&expected), "{name}");
        assert_eq!(out.log.kinds(), vec![EditKind::DataReplaced], "{name}");
    }
}

#[test]
fn every_corpus_target_pair_replays() {
    for (name, spec, _) in corpus() {
        for data in common::targets() {
            let out = retarget(&spec, &data, &[], None)
                .unwrap_or_else(|e| panic!("{name} -> {}: {e}", data.profile.source));
            assert!(out.log.reproduces(&spec, &out.spec), "{name} -> {}", data.profile.source);
        }
    }
}

#[test]
fn dropping_color_removes_the_channel() {
    let (_, spec, data) = corpus().into_iter().find(|(n, ..)| n == "grouped_box").unwrap();
    let flag: Flag = "drop-encoding=color".parse().unwrap();
    let out = retarget(&spec, &data, &[flag], None).unwrap();
    assert!(!out.spec.encodings.contains_key(&Channel::Color));
    assert_eq!(out.spec.encodings.len(), 2);
    assert!(out.log.kinds().contains(&EditKind::EncodingDropped));
    assert!(out.log.reproduces(&spec, &out.spec));
}

#[test]
fn refresh_is_idempotent() {
    for (name, spec, _) in corpus() {
        for data in common::targets() {
            let out = retarget(&spec, &data, &[], None).unwrap();
            let (g, glog) = refresh_guides(&out.spec, &spec, &out.roles, &out.plan);
            assert!(glog.is_empty(), "{name} -> {}: {:?}", data.profile.source, glog.edits);
            let (sc, slog) = refresh_scales(&g, &spec, &data, false).unwrap();
            assert!(slog.is_empty(), "{name} -> {}: {:?}", data.profile.source, slog.edits);
            assert_eq!(serialize_spec(&sc), serialize_spec(&out.spec));
        }
    }
}

#[test]
fn category_domain_follows_first_appearance() {
    let spec = corpus_spec("stacked_area");
    let data = target("stocks.csv");
    let out = retarget(&spec, &data, &[], None).unwrap();
    let color = &out.spec.encodings[&Channel::Color];
    assert_eq!(color.field, "symbol");

    let mut expected: Vec<String> = Vec::new();
    for s in csv_column(&fixtures().join("datasets/stocks.csv"), "symbol") {
        if !expected.contains(&s) {
            expected.push(s);
        }
    }
    assert_eq!(
        color.scale.as_ref().unwrap().domain,
        Some(Domain::Categories(expected))
    );
}

fn many_categories() -> Dataset {
    // Category k appears k+1 times, so the top 20 are k = 34..=15.
    let mut text = String::from("cat,val\n");
    for k in 0..35 {
        for i in 0..=k {
            text.push_str(&format!("c{k:02},{}\n", i * 3 + k));
        }
    }
    Dataset::new("many.csv", ingest_table(text.as_bytes(), TableFormat::Csv).unwrap())
}

#[test]
fn force_filter_keeps_the_most_frequent() {
    let spec = parse_spec(
        r#"{"data":{"url":"x.csv"},"mark":"bar","encoding":{
            "x":{"field":"cat","type":"nominal"},"y":{"field":"val","type":"quantitative","aggregate":"sum"}}}"#,
    )
    .unwrap();
    let data = many_categories();
    let out = retarget(&spec, &data, &["force-filter=cat".parse().unwrap()], None).unwrap();
    let TransformOp::Filter(p) = &out.spec.transforms[0].op else {
        panic!("expected a leading filter")
    };
    let PredicateTest::OneOf(kept) = &p.test else { panic!("expected oneOf") };
    let expected: Vec<String> = (15..35).rev().map(|k| format!("c{k:02}")).collect();
    let kept: Vec<String> = kept.iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(kept.len(), TOP_N);
    assert_eq!(kept, expected);

    // Already filtered: a second pass adds nothing.
    let again = retarget(&out.spec, &data, &["force-filter=cat".parse().unwrap()], None).unwrap();
    assert_eq!(again.spec.transforms.len(), 1);
}

#[test]
fn force_aggregate_groups_by_discrete_channels() {
    let spec = corpus_spec("scatter_trend");
    let data = target("organisms.csv");
    let plain = retarget(&spec, &data, &[], None).unwrap();
    let out = retarget(&spec, &data, &["force-aggregate=median".parse().unwrap()], None).unwrap();
    let first = &out.spec.layers.as_ref().unwrap()[0];
    let agg = first
        .transforms
        .iter()
        .find_map(|t| match &t.op {
            TransformOp::Aggregate { ops, groupby, .. } => Some((ops, groupby)),
            _ => None,
        })
        .expect("aggregate added to the point layer");
    let plain_first = &plain.spec.layers.as_ref().unwrap()[0];
    let color = &plain_first.encodings[&Channel::Color];
    assert_eq!(agg.1, &vec![color.field.clone()]);
    for (ch, enc) in &first.encodings {
        if enc.kind == Kind::Quantitative {
            assert_eq!(enc.field, format!("median_{}", plain_first.encodings[ch].field));
        }
    }
    assert!(out.log.reproduces(&spec, &out.spec));
}

