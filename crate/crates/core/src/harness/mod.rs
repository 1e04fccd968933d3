//! Batch evaluation over a chart × dataset × condition matrix.

mod export;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{export_matrix, import_matrix, ExportFormat};

use crate::advisor::{one_shot_retarget, AdviceError, Advisor};
use crate::linter::{lint, lint_with, ErrorReport, LintOptions};
use crate::mapper::MappingPlan;
use crate::profiler::{Dataset, ProfileError};
use crate::rewriter::{retarget, RewriteLog};
use crate::spec::{parse_spec, serialize_spec, ChartSpec, DataLocation, ParseErrors};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Spec { path: PathBuf, source: ParseErrors },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: ProfileError },
    #[error("chart {chart} does not reference a data file")]
    NoDataFile { chart: String },
    #[error("chart {chart} is not clean on its own data: {summary}")]
    SelfLint { chart: String, summary: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("malformed matrix export: {0}")]
    Import(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// The advisor rewrites the whole spec in one request.
    Baseline,
    /// Roles, plan, apply and refresh, with the advisor consulted per stage.
    Pipeline,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Pipeline => "pipeline",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Condition::Baseline),
            "pipeline" => Ok(Condition::Pipeline),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Rendered,
    Failed,
    Skipped,
}

/// Outputs of one cell kept for artifact files; not part of the export.
#[derive(Debug, Clone, Default)]
pub struct CellArtifacts {
    pub spec_text: Option<String>,
    pub plan: Option<MappingPlan>,
    pub log: Option<RewriteLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixCell {
    pub chart: String,
    pub dataset: String,
    pub condition: Condition,
    pub outcome: Outcome,
    /// Absent for skipped cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ErrorReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    /// Wall time varies run to run, so it stays out of the export.
    #[serde(skip)]
    pub wall: Duration,
    #[serde(skip)]
    pub artifacts: CellArtifacts,
}

impl PartialEq for MatrixCell {
    fn eq(&self, other: &Self) -> bool {
        (&self.chart, &self.dataset, self.condition, self.outcome, &self.report, &self.diagnostics)
            == (&other.chart, &other.dataset, other.condition, other.outcome, &other.report, &other.diagnostics)
    }
}

impl MatrixCell {
    fn skipped(chart: &str, dataset: &str, condition: Condition, why: String) -> MatrixCell {
        MatrixCell {
            chart: chart.to_string(),
            dataset: dataset.to_string(),
            condition,
            outcome: Outcome::Skipped,
            report: None,
            diagnostics: Some(why),
            wall: Duration::ZERO,
            artifacts: CellArtifacts::default(),
        }
    }

    fn failed(chart: &str, dataset: &str, condition: Condition, why: String) -> MatrixCell {
        MatrixCell {
            chart: chart.to_string(),
            dataset: dataset.to_string(),
            condition,
            outcome: Outcome::Failed,
            report: Some(ErrorReport::unrendered("", why.clone())),
            diagnostics: Some(why),
            wall: Duration::ZERO,
            artifacts: CellArtifacts::default(),
        }
    }

    fn linted(
        chart: &str,
        dataset: &str,
        condition: Condition,
        report: ErrorReport,
        artifacts: CellArtifacts,
        diagnostics: Option<String>,
    ) -> MatrixCell {
        MatrixCell {
            chart: chart.to_string(),
            dataset: dataset.to_string(),
            condition,
            outcome: if report.rendered { Outcome::Rendered } else { Outcome::Failed },
            report: Some(report),
            diagnostics,
            wall: Duration::ZERO,
            artifacts,
        }
    }

    pub fn total_errors(&self) -> Option<usize> {
        self.report.as_ref().map(ErrorReport::total)
    }
}

/// Semantic and pragmatic counts divided by the number of rendered cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub rendered: usize,
    pub executed: usize,
    pub semantic: usize,
    pub pragmatic: usize,
    pub semantic_per_rendered: Option<f64>,
    pub pragmatic_per_rendered: Option<f64>,
}

impl Normalized {
    pub fn of<'a>(cells: impl Iterator<Item = &'a MatrixCell>) -> Normalized {
        let (mut rendered, mut executed, mut semantic, mut pragmatic) = (0, 0, 0, 0);
        for c in cells {
            if c.outcome == Outcome::Rendered {
                rendered += 1;
            }
            if let Some(r) = &c.report {
                executed += 1;
                semantic += r.counts.semantic;
                pragmatic += r.counts.pragmatic;
            }
        }
        let per = |n: usize| (rendered > 0).then(|| n as f64 / rendered as f64);
        Normalized {
            rendered,
            executed,
            semantic,
            pragmatic,
            semantic_per_rendered: per(semantic),
            pragmatic_per_rendered: per(pragmatic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMatrix {
    pub charts: Vec<String>,
    pub datasets: Vec<String>,
    pub conditions: Vec<Condition>,
    /// Chart-major, then dataset, then condition.
    pub cells: Vec<MatrixCell>,
    pub normalized: BTreeMap<Condition, Normalized>,
}

impl ErrorMatrix {
    pub fn new(
        charts: Vec<String>,
        datasets: Vec<String>,
        conditions: Vec<Condition>,
        cells: Vec<MatrixCell>,
    ) -> ErrorMatrix {
        let normalized = conditions
            .iter()
            .map(|&c| (c, Normalized::of(cells.iter().filter(|x| x.condition == c))))
            .collect();
        ErrorMatrix {
            charts,
            datasets,
            conditions,
            cells,
            normalized,
        }
    }

    pub fn cell(&self, chart: &str, dataset: &str, condition: Condition) -> Option<&MatrixCell> {
        self.cells
            .iter()
            .find(|c| c.chart == chart && c.dataset == dataset && c.condition == condition)
    }
}

/// A corpus chart and the data it was written for.
#[derive(Debug, Clone)]
pub struct Chart {
    pub id: String,
    pub spec: ChartSpec,
    pub data: Dataset,
}

fn json_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| exts.iter().any(|x| e == *x)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads `*.json` specs from `dir`, each with the file its data url names
/// (relative to `dir`). Sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<Chart>, HarnessError> {
    let mut out = Vec::new();
    for path in json_files(dir, &["json"])? {
        let text = std::fs::read_to_string(&path).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        let spec = parse_spec(&text).map_err(|source| HarnessError::Spec {
            path: path.clone(),
            source,
        })?;
        let id = stem(&path);
        let url = match spec.data.as_ref().map(|d| &d.location) {
            Some(DataLocation::Url(u)) => u.clone(),
            _ => return Err(HarnessError::NoDataFile { chart: id }),
        };
        let data_path = dir.join(url);
        let data = Dataset::load(&data_path).map_err(|source| HarnessError::Data {
            path: data_path,
            source,
        })?;
        out.push(Chart { id, spec, data });
    }
    Ok(out)
}

/// Loads every `.csv` and `.json` table in `dir`, keyed by file stem.
pub fn load_datasets(dir: &Path) -> Result<Vec<(String, Dataset)>, HarnessError> {
    json_files(dir, &["csv", "json"])?
        .into_iter()
        .map(|path| {
            let data = Dataset::load(&path).map_err(|source| HarnessError::Data {
                path: path.clone(),
                source,
            })?;
            Ok((stem(&path), data))
        })
        .collect()
}

/// Logical CPUs, capped by what the advisor accepts concurrently.
pub fn default_workers(advisor: Option<&dyn Advisor>) -> usize {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    advisor
        .and_then(|a| a.max_in_flight())
        .map_or(cpus, |m| cpus.min(m))
        .max(1)
}

fn check_corpus(charts: &[Chart]) -> Result<(), HarnessError> {
    for c in charts {
        let r = lint(&c.spec, &c.data.profile, &c.data.table);
        let bad: Vec<String> = r
            .findings
            .iter()
            .filter(|f| f.axis != crate::linter::Axis::Pragmatic)
            .map(|f| format!("{} at {}", f.code, f.path))
            .collect();
        if !bad.is_empty() {
            return Err(HarnessError::SelfLint {
                chart: c.id.clone(),
                summary: bad.join(", "),
            });
        }
    }
    Ok(())
}

fn run_cell(
    chart: &Chart,
    dataset: &str,
    data: &Dataset,
    condition: Condition,
    advisor: Option<&dyn Advisor>,
) -> MatrixCell {
    let options = LintOptions {
        previous_columns: chart.data.profile.column_names(),
        ..LintOptions::default()
    };
    let lint_spec = |spec: &ChartSpec| lint_with(spec, &data.profile, &data.table, &options);
    match condition {
        Condition::Baseline => {
            let Some(adv) = advisor else {
                return MatrixCell::skipped(&chart.id, dataset, condition, "no advisor backend".into());
            };
            match one_shot_retarget(adv, &chart.spec, &data.profile) {
                Err(AdviceError::NoBackend) => MatrixCell::skipped(
                    &chart.id,
                    dataset,
                    condition,
                    format!("advisor {} cannot rewrite whole specs", adv.id()),
                ),
                Err(e) => MatrixCell::failed(&chart.id, dataset, condition, e.to_string()),
                Ok(text) => match parse_spec(&text) {
                    Err(e) => MatrixCell::failed(&chart.id, dataset, condition, e.to_string()),
                    Ok(spec) => {
                        let artifacts = CellArtifacts {
                            spec_text: Some(serialize_spec(&spec)),
                            ..CellArtifacts::default()
                        };
                        MatrixCell::linted(&chart.id, dataset, condition, lint_spec(&spec), artifacts, None)
                    }
                },
            }
        }
        Condition::Pipeline => match retarget(&chart.spec, data, &[], advisor) {
            Err(e) => MatrixCell::failed(&chart.id, dataset, condition, e.to_string()),
            Ok(out) => {
                let report = lint_spec(&out.spec);
                let notes = (!out.fallbacks.is_empty()).then(|| out.fallbacks.join("; "));
                let artifacts = CellArtifacts {
                    spec_text: Some(serialize_spec(&out.spec)),
                    plan: Some(out.plan),
                    log: Some(out.log),
                };
                MatrixCell::linted(&chart.id, dataset, condition, report, artifacts, notes)
            }
        },
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs every cell on a pool of `workers` threads. Cells come back in
/// chart, dataset, condition order whatever the scheduling; a cell that
/// panics is recorded as failed.
pub fn run_matrix(
    charts: &[Chart],
    datasets: &[(String, Dataset)],
    conditions: &[Condition],
    advisor: Option<&dyn Advisor>,
    workers: usize,
) -> Result<ErrorMatrix, HarnessError> {
    check_corpus(charts)?;
    let jobs: Vec<(&Chart, &(String, Dataset), Condition)> = charts
        .iter()
        .flat_map(|c| {
            datasets
                .iter()
                .flat_map(move |d| conditions.iter().map(move |&k| (c, d, k)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let cells: Vec<MatrixCell> = pool.install(|| {
        jobs.par_iter()
            .map(|(chart, (id, data), condition)| {
                let start = Instant::now();
                let result = catch_unwind(AssertUnwindSafe(|| {
                    run_cell(chart, id, data, *condition, advisor)
                }));
                let mut cell = result.unwrap_or_else(|p| {
                    MatrixCell::failed(&chart.id, id, *condition, format!("panic: {}", panic_message(&*p)))
                });
                cell.wall = start.elapsed();
                cell
            })
            .collect()
    });
    Ok(ErrorMatrix::new(
        charts.iter().map(|c| c.id.clone()).collect(),
        datasets.iter().map(|(id, _)| id.clone()).collect(),
        conditions.to_vec(),
        cells,
    ))
}
