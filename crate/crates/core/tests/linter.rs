mod common;

use retarget::linter::{lint, lint_with, Axis, Code, ErrorReport, LintOptions, Severity};
use retarget::mapper::Flag;
use retarget::profiler::{ingest_table, Cell, Dataset, Table, TableFormat};
use retarget::rewriter::retarget;
use retarget::spec::parse_spec;

use common::{corpus, corpus_spec, target};

fn csv(text: &str) -> Dataset {
    Dataset::new("t.csv", ingest_table(text.as_bytes(), TableFormat::Csv).unwrap())
}

fn run(spec: &str, data: &Dataset) -> ErrorReport {
    lint(&parse_spec(spec).unwrap(), &data.profile, &data.table)
}

fn codes(r: &ErrorReport) -> Vec<Code> {
    r.findings.iter().map(|f| f.code).collect()
}

#[test]
fn corpus_is_clean_on_its_own_data() {
    for (name, spec, data) in corpus() {
        let r = lint(&spec, &data.profile, &data.table);
        assert_eq!(r.counts.syntactic + r.counts.semantic, 0, "{name}: {:?}", r.findings);
        assert!(r.rendered);
        let out = retarget(&spec, &data, &[], None).unwrap();
        let r = lint(&out.spec, &data.profile, &data.table);
        assert_eq!(r.counts.syntactic + r.counts.semantic, 0, "{name}: {:?}", r.findings);
    }
}

#[test]
fn counts_match_findings() {
    for (_, spec, _) in corpus() {
        for data in common::targets() {
            let r = lint(&spec, &data.profile, &data.table);
            for axis in [Axis::Syntactic, Axis::Semantic, Axis::Pragmatic] {
                let n = r.findings.iter().filter(|f| f.axis == axis).count();
                assert_eq!(r.counts.get(axis), n);
            }
            assert_eq!(r.total(), r.findings.len());
            let fatal_syn = r
                .findings
                .iter()
                .any(|f| f.axis == Axis::Syntactic && f.severity == Severity::Fatal);
            assert_eq!(r.rendered, !fatal_syn);
            assert_eq!(r, lint(&spec, &data.profile, &data.table));
        }
    }
}

#[test]
fn unresolved_fields_block_rendering() {
    let spec = corpus_spec("ridgeline");
    let data = target("unemployment.csv");
    let r = lint(&spec, &data.profile, &data.table);
    assert!(!r.rendered);
    assert_eq!(r.exit_code(), 2);
    let c = codes(&r);
    assert!(c.contains(&Code::SynStaleRef), "{c:?}");
    assert!(c.contains(&Code::SynUnresolved) || c.contains(&Code::SynStaleRef));
}

fn big_points(rows: usize) -> Dataset {
    let table = Table::new(
        vec!["a".into(), "b".into()],
        (0..rows)
            .map(|i| vec![Cell::Number(i as f64), Cell::Number((i * 7 % 1000) as f64)])
            .collect(),
    )
    .unwrap();
    Dataset::new("big.csv", table)
}

#[test]
fn overplotting_grades_by_marks_per_panel() {
    let spec = r#"{"data":{"url":"big.csv"},"mark":"point","encoding":{
        "x":{"field":"a","type":"quantitative"},"y":{"field":"b","type":"quantitative"}}}"#;
    let sev = |rows| {
        run(spec, &big_points(rows))
            .findings
            .iter()
            .find(|f| f.code == Code::PragOverplot)
            .map(|f| f.severity)
    };
    assert_eq!(sev(2000), None);
    assert_eq!(sev(3000), Some(Severity::Major));
    assert_eq!(sev(750_000), Some(Severity::Fatal));

    // Aggregating to one mark per x value removes the problem.
    let agg = r#"{"data":{"url":"big.csv"},"mark":"point","encoding":{
        "x":{"field":"b","type":"quantitative"},"y":{"field":"a","type":"quantitative","aggregate":"mean"}}}"#;
    assert!(!codes(&run(agg, &big_points(5000))).contains(&Code::PragOverplot));

    // A custom threshold is honoured.
    let d = big_points(1500);
    let r = lint_with(
        &parse_spec(spec).unwrap(),
        &d.profile,
        &d.table,
        &LintOptions::default().with_overplot_threshold(1000),
    );
    assert!(codes(&r).contains(&Code::PragOverplot));
}

#[test]
fn facets_divide_the_mark_count() {
    let mut text = String::from("g,x,y\n");
    for i in 0..4000 {
        text.push_str(&format!("g{},{i},{}\n", i % 4, i % 13));
    }
    let d = csv(&text);
    let spec = r#"{"data":{"url":"t.csv"},"mark":"point","encoding":{
        "x":{"field":"x","type":"quantitative"},"y":{"field":"y","type":"quantitative"}},
        "facet":{"field":"g","type":"nominal"}}"#;
    assert!(!codes(&run(spec, &d)).contains(&Code::PragOverplot));
}

#[test]
fn list_cells_are_flagged() {
    let data = target("movies.json");
    let spec = r#"{"data":{"url":"movies.json"},"mark":"bar","encoding":{
        "y":{"field":"genre","type":"nominal"},"x":{"field":"gross","type":"quantitative","aggregate":"sum"}}}"#;
    let r = run(spec, &data);
    let f = r.findings.iter().find(|f| f.code == Code::SemArrayCell).unwrap();
    assert_eq!(f.path, "/encoding/y/field");
    assert_eq!(f.axis, Axis::Semantic);
}

#[test]
fn literal_domains_must_cover_the_data() {
    let d = csv("a,b\n1,0\n2,50\n3,101.5\n");
    let spec = |domain: &str| {
        format!(
            r#"{{"data":{{"url":"t.csv"}},"mark":"bar","encoding":{{"x":{{"field":"a","type":"ordinal"}},
            "y":{{"field":"b","type":"quantitative","scale":{{"domain":{domain}}}}}}}}}"#
        )
    };
    // 1.5 past the top of a range of 100 exceeds the 1% tolerance...
    assert!(codes(&run(&spec("[0, 100]"), &d)).contains(&Code::SemDomainExtent));
    // ...while 0.5 does not.
    assert!(!codes(&run(&spec("[0, 101]"), &d)).contains(&Code::SemDomainExtent));

    let cats = r#"{"data":{"url":"t.csv"},"mark":"bar","encoding":{
        "x":{"field":"c","type":"nominal","scale":{"domain":["p","q"]}},"y":{"field":"v","type":"quantitative"}}}"#;
    assert!(codes(&run(cats, &csv("c,v\np,1\nq,2\nr,3\n"))).contains(&Code::SemDomainExtent));
    assert!(!codes(&run(cats, &csv("c,v\np,1\nq,2\n"))).contains(&Code::SemDomainExtent));
}

#[test]
fn hidden_legends_need_a_redundant_axis() {
    let d = csv("a,b\n1,2\n3,4\n");
    let hidden = r#"{"data":{"url":"t.csv"},"mark":"point","encoding":{
        "x":{"field":"a","type":"quantitative"},"color":{"field":"b","type":"quantitative","legend":null}}}"#;
    let r = run(hidden, &d);
    assert_eq!(codes(&r), vec![Code::PragNoLegend]);
    assert_eq!(r.findings[0].severity, Severity::Minor);
    assert_eq!(r.exit_code(), 1);
    let redundant = hidden.replace(r#""field":"b","type":"quantitative","legend""#, r#""field":"a","type":"quantitative","legend""#);
    assert_eq!(run(&redundant, &d).exit_code(), 0);
}

#[test]
fn kind_problems() {
    let d = csv("name,day,v\nx,2020-01-01,1\ny,2020-02-01,2\n");
    let timeunit_on_text = r#"{"data":{"url":"t.csv"},"transform":[{"timeUnit":"month","field":"name","as":"m"}],
        "mark":"bar","encoding":{"x":{"field":"m","type":"temporal"},"y":{"field":"v","type":"quantitative"}}}"#;
    let r = run(timeunit_on_text, &d);
    assert!(codes(&r).contains(&Code::SynKindMismatch), "{:?}", r.findings);
    assert!(!r.rendered);

    let q_on_text = r#"{"data":{"url":"t.csv"},"mark":"bar","encoding":{
        "x":{"field":"name","type":"quantitative"},"y":{"field":"v","type":"quantitative"}}}"#;
    assert_eq!(codes(&run(q_on_text, &d)), vec![Code::SemKindChannel]);

    let mean_of_text = r#"{"data":{"url":"t.csv"},"mark":"bar","encoding":{
        "x":{"field":"day","type":"temporal"},"y":{"field":"name","type":"quantitative","aggregate":"mean"}}}"#;
    assert_eq!(codes(&run(mean_of_text, &d)), vec![Code::SemKindChannel]);

    let temporal_format_on_number = r#"{"data":{"url":"t.csv"},"mark":"bar","encoding":{
        "x":{"field":"name","type":"nominal"},"y":{"field":"v","type":"quantitative","axis":{"format":"%B"}}}}"#;
    assert_eq!(codes(&run(temporal_format_on_number, &d)), vec![Code::SynKindMismatch]);
}

#[test]
fn stale_formats() {
    let d = csv("day,v\n2019-06-01,1\n2021-03-01,2\n");
    let month_only = r#"{"data":{"url":"t.csv"},"mark":"line","encoding":{
        "x":{"field":"day","type":"temporal","axis":{"format":"%B"}},"y":{"field":"v","type":"quantitative"}}}"#;
    assert_eq!(codes(&run(month_only, &d)), vec![Code::PragStaleFormat]);
    assert!(run(&month_only.replace("%B", "%B %Y"), &d).findings.is_empty());

    let one_year = csv("day,v\n2019-06-01,1\n2019-09-01,2\n");
    assert_eq!(codes(&run(&month_only.replace("%B", "%Y"), &one_year)), vec![Code::PragStaleFormat]);
}

#[test]
fn titles_naming_old_columns_are_stale() {
    let spec = corpus_spec("bar");
    let data = target("stocks.csv");
    let opts = LintOptions {
        previous_columns: vec!["region".into(), "quarter".into(), "revenue".into()],
        ..LintOptions::default()
    };
    // The source chart, unchanged, still talks about revenue and regions.
    let stale = lint_with(&spec, &data.profile, &data.table, &opts);
    let titles: Vec<&str> = stale
        .findings
        .iter()
        .filter(|f| f.code == Code::SemStaleTitle)
        .map(|f| f.path.as_str())
        .collect();
    assert_eq!(titles, ["/encoding/x/axis/title", "/encoding/y/axis/title", "/title", "/title"]);

    let out = retarget(&spec, &data, &[], None).unwrap();
    let fresh = lint_with(&out.spec, &data.profile, &data.table, &opts);
    assert_eq!(fresh.count(Code::SemStaleTitle), 0, "{:?}", out.spec.title);
}

#[test]
fn keep_domains_is_reported() {
    let spec = corpus_spec("stacked_area");
    let data = target("stocks.csv");
    let kept = retarget(&spec, &data, &["keep-domains".parse::<Flag>().unwrap()], None).unwrap();
    assert!(codes(&lint(&kept.spec, &data.profile, &data.table)).contains(&Code::SemDomainExtent));
    let refreshed = retarget(&spec, &data, &[], None).unwrap();
    assert!(!codes(&lint(&refreshed.spec, &data.profile, &data.table)).contains(&Code::SemDomainExtent));
}
