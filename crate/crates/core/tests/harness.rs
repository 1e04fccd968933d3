mod common;

use std::collections::BTreeMap;

use retarget::advisor::HeuristicAdvisor;
use retarget::harness::{
    export_matrix, import_matrix, load_corpus, load_datasets, run_matrix, Condition, ErrorMatrix,
    ExportFormat, HarnessError, Normalized, Outcome,
};
use retarget::profiler::Dataset;

use common::fixtures;

const BOTH: [Condition; 2] = [Condition::Baseline, Condition::Pipeline];

fn offline(workers: usize) -> ErrorMatrix {
    let charts = load_corpus(&fixtures().join("corpus")).unwrap();
    let datasets = load_datasets(&fixtures().join("datasets")).unwrap();
    run_matrix(&charts, &datasets, &BOTH, None, workers).unwrap()
}

#[test]
fn offline_matrix_shape() {
    let m = offline(4);
    assert_eq!(m.cells.len(), 64);
    assert_eq!(m.charts.len(), 8);
    assert_eq!(m.datasets, ["movies", "organisms", "stocks", "unemployment"]);
    let mut i = 0;
    for chart in &m.charts {
        for dataset in &m.datasets {
            for condition in BOTH {
                let c = &m.cells[i];
                assert_eq!((&c.chart, &c.dataset, c.condition), (chart, dataset, condition));
                match condition {
                    Condition::Baseline => {
                        assert_eq!(c.outcome, Outcome::Skipped);
                        assert!(c.report.is_none());
                    }
                    Condition::Pipeline => {
                        assert_ne!(c.outcome, Outcome::Skipped);
                        let r = c.report.as_ref().unwrap();
                        assert_eq!(c.outcome == Outcome::Failed, !r.rendered);
                    }
                }
                i += 1;
            }
        }
    }
}

#[test]
fn exports_are_deterministic_across_runs_and_workers() {
    let a = offline(1);
    let b = offline(8);
    let c = offline(8);
    for fmt in [ExportFormat::Csv, ExportFormat::Json] {
        assert_eq!(export_matrix(&a, fmt), export_matrix(&b, fmt));
        assert_eq!(export_matrix(&b, fmt), export_matrix(&c, fmt));
    }
}

#[test]
fn normalization_recomputes_from_export() {
    let m = offline(2);
    let back = import_matrix(&export_matrix(&m, ExportFormat::Json)).unwrap();
    assert_eq!(back, m);

    let raw: serde_json::Value = serde_json::from_slice(&export_matrix(&m, ExportFormat::Json)).unwrap();
    let mut rendered: BTreeMap<String, usize> = BTreeMap::new();
    let mut sem: BTreeMap<String, usize> = BTreeMap::new();
    let mut prag: BTreeMap<String, usize> = BTreeMap::new();
    for cell in raw["cells"].as_array().unwrap() {
        let cond = cell["condition"].as_str().unwrap().to_string();
        if cell["outcome"] == "rendered" {
            *rendered.entry(cond.clone()).or_default() += 1;
        }
        if let Some(counts) = cell.get("report").map(|r| &r["counts"]) {
            *sem.entry(cond.clone()).or_default() += counts["semantic"].as_u64().unwrap() as usize;
            *prag.entry(cond).or_default() += counts["pragmatic"].as_u64().unwrap() as usize;
        }
    }
    let pipeline = &raw["normalized"]["pipeline"];
    let r = rendered["pipeline"] as f64;
    assert!(r > 0.0);
    assert_eq!(pipeline["semantic_per_rendered"].as_f64().unwrap(), sem["pipeline"] as f64 / r);
    assert_eq!(pipeline["pragmatic_per_rendered"].as_f64().unwrap(), prag["pipeline"] as f64 / r);
    assert!(raw["normalized"]["baseline"]["semantic_per_rendered"].is_null());
}

#[test]
fn csv_has_one_row_per_chart() {
    let m = offline(2);
    let text = String::from_utf8(export_matrix(&m, ExportFormat::Csv)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "chart,movies,organisms,stocks,unemployment");
    assert_eq!(lines.len(), 9);
    for (line, chart) in lines[1..].iter().zip(&m.charts) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], chart);
        for (v, ds) in fields[1..].iter().zip(&m.datasets) {
            let cell = m.cell(chart, ds, Condition::Pipeline).unwrap();
            assert_eq!(v.parse::<usize>().unwrap(), cell.report.as_ref().unwrap().total());
        }
    }
}

#[test]
fn empty_corpus_gives_header_only_csv() {
    let datasets = load_datasets(&fixtures().join("datasets")).unwrap();
    let m = run_matrix(&[], &datasets, &BOTH, None, 2).unwrap();
    assert!(m.cells.is_empty());
    let text = String::from_utf8(export_matrix(&m, ExportFormat::Csv)).unwrap();
    assert_eq!(text, "chart,movies,organisms,stocks,unemployment\n");
    assert_eq!(
        m.normalized[&Condition::Pipeline],
        Normalized::of(std::iter::empty())
    );
}

#[test]
fn heuristic_advisor_skips_baseline_and_runs_pipeline() {
    let charts = load_corpus(&fixtures().join("corpus")).unwrap();
    let datasets: Vec<(String, Dataset)> = load_datasets(&fixtures().join("datasets"))
        .unwrap()
        .into_iter()
        .take(1)
        .collect();
    let adv = HeuristicAdvisor;
    let with = run_matrix(&charts[..2], &datasets, &BOTH, Some(&adv), 2).unwrap();
    let without = run_matrix(&charts[..2], &datasets, &BOTH, None, 2).unwrap();
    for (a, b) in with.cells.iter().zip(&without.cells) {
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn dirty_corpus_is_refused() {
    let mut charts = load_corpus(&fixtures().join("corpus")).unwrap();
    let datasets = load_datasets(&fixtures().join("datasets")).unwrap();
    let victim = charts[1].id.clone();
    let other = charts[0].data.clone();
    charts[1].data = other;
    match run_matrix(&charts, &datasets, &BOTH, None, 2) {
        Err(HarnessError::SelfLint { chart, .. }) => assert_eq!(chart, victim),
        other => panic!("expected a self-lint failure, got {other:?}"),
    }
}
