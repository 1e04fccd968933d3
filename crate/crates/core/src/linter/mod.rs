//! Defect classification for (retargeted) specs along three axes:
//! syntactic problems that stop a chart from rendering, semantic problems
//! that make it say the wrong thing, and pragmatic problems that make it
//! hard to read.

mod rules;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::profiler::{DatasetProfile, Table};
use crate::spec::ChartSpec;

/// Marks per panel above which point marks count as overplotted.
pub const OVERPLOT_POINTS: usize = 2500;
/// Same for line and area marks (points per series times series).
pub const OVERPLOT_LINES: usize = 250;
/// Overplotting this many times past the threshold is fatal.
pub const HARD_FACTOR: f64 = 10.0;
/// Allowed shortfall of a literal domain, as a fraction of its range.
pub const DOMAIN_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LintError {
    #[error("unknown lint code {0:?}")]
    UnknownCode(String),
    #[error("lint code {0} needs a magnitude")]
    MissingMagnitude(Code),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Syntactic,
    Semantic,
    Pragmatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
    Fatal,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Minor => "minor",
            Severity::Major => "major",
            Severity::Fatal => "fatal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Code {
    #[serde(rename = "SYN-UNRESOLVED")]
    SynUnresolved,
    #[serde(rename = "SYN-STALE-REF")]
    SynStaleRef,
    #[serde(rename = "SYN-KIND-MISMATCH")]
    SynKindMismatch,
    #[serde(rename = "SYN-SCHEMA")]
    SynSchema,
    #[serde(rename = "SEM-DOMAIN-EXTENT")]
    SemDomainExtent,
    #[serde(rename = "SEM-STALE-TITLE")]
    SemStaleTitle,
    #[serde(rename = "SEM-KIND-CHANNEL")]
    SemKindChannel,
    #[serde(rename = "SEM-ARRAY-CELL")]
    SemArrayCell,
    #[serde(rename = "PRAG-NO-LEGEND")]
    PragNoLegend,
    #[serde(rename = "PRAG-OVERPLOT")]
    PragOverplot,
    #[serde(rename = "PRAG-STALE-FORMAT")]
    PragStaleFormat,
}

impl Code {
    pub const ALL: [Code; 11] = [
        Code::SynUnresolved,
        Code::SynStaleRef,
        Code::SynKindMismatch,
        Code::SynSchema,
        Code::SemDomainExtent,
        Code::SemStaleTitle,
        Code::SemKindChannel,
        Code::SemArrayCell,
        Code::PragNoLegend,
        Code::PragOverplot,
        Code::PragStaleFormat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Code::SynUnresolved => "SYN-UNRESOLVED",
            Code::SynStaleRef => "SYN-STALE-REF",
            Code::SynKindMismatch => "SYN-KIND-MISMATCH",
            Code::SynSchema => "SYN-SCHEMA",
            Code::SemDomainExtent => "SEM-DOMAIN-EXTENT",
            Code::SemStaleTitle => "SEM-STALE-TITLE",
            Code::SemKindChannel => "SEM-KIND-CHANNEL",
            Code::SemArrayCell => "SEM-ARRAY-CELL",
            Code::PragNoLegend => "PRAG-NO-LEGEND",
            Code::PragOverplot => "PRAG-OVERPLOT",
            Code::PragStaleFormat => "PRAG-STALE-FORMAT",
        }
    }

    pub fn axis(self) -> Axis {
        match self.as_str().split('-').next() {
            Some("SYN") => Axis::Syntactic,
            Some("SEM") => Axis::Semantic,
            _ => Axis::Pragmatic,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Code {
    type Err = LintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Code::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| LintError::UnknownCode(s.to_string()))
    }
}

/// Tunable thresholds. `previous_columns` names the columns of the data the
/// spec was written for; titles mentioning them are reported as stale.
#[derive(Debug, Clone, PartialEq)]
pub struct LintOptions {
    pub overplot_points: usize,
    pub overplot_lines: usize,
    pub previous_columns: Vec<String>,
}

impl Default for LintOptions {
    fn default() -> Self {
        LintOptions {
            overplot_points: OVERPLOT_POINTS,
            overplot_lines: OVERPLOT_LINES,
            previous_columns: Vec::new(),
        }
    }
}

impl LintOptions {
    /// Point threshold `n`; the line/area threshold keeps the default ratio.
    pub fn with_overplot_threshold(mut self, n: usize) -> Self {
        self.overplot_points = n.max(1);
        self.overplot_lines = (n * OVERPLOT_LINES / OVERPLOT_POINTS).max(1);
        self
    }

    /// Severity of `code`. For PRAG-OVERPLOT the magnitude is marks per
    /// panel, expressed against the point threshold.
    pub fn severity(&self, code: Code, magnitude: Option<f64>) -> Result<Severity, LintError> {
        Ok(match code {
            Code::SynUnresolved | Code::SynStaleRef | Code::SynKindMismatch | Code::SynSchema => {
                Severity::Fatal
            }
            Code::SemDomainExtent | Code::SemKindChannel | Code::SemArrayCell => Severity::Major,
            Code::SemStaleTitle | Code::PragNoLegend | Code::PragStaleFormat => Severity::Minor,
            Code::PragOverplot => {
                let m = magnitude.ok_or(LintError::MissingMagnitude(code))?;
                let t = self.overplot_points as f64;
                if m > t * HARD_FACTOR {
                    Severity::Fatal
                } else if m > t {
                    Severity::Major
                } else {
                    Severity::Minor
                }
            }
        })
    }
}

/// Severity for a code name under the default thresholds.
pub fn classify_severity(code: &str, magnitude: Option<f64>) -> Result<Severity, LintError> {
    LintOptions::default().severity(code.parse()?, magnitude)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub code: Code,
    pub axis: Axis,
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisCounts {
    pub syntactic: usize,
    pub semantic: usize,
    pub pragmatic: usize,
}

impl AxisCounts {
    pub fn total(&self) -> usize {
        self.syntactic + self.semantic + self.pragmatic
    }

    pub fn get(&self, axis: Axis) -> usize {
        match axis {
            Axis::Syntactic => self.syntactic,
            Axis::Semantic => self.semantic,
            Axis::Pragmatic => self.pragmatic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub findings: Vec<Finding>,
    pub counts: AxisCounts,
    pub rendered: bool,
}

impl ErrorReport {
    pub fn new(mut findings: Vec<Finding>) -> ErrorReport {
        findings.sort_by(|a, b| {
            (a.code, &a.path, &a.message).cmp(&(b.code, &b.path, &b.message))
        });
        findings.dedup();
        let mut counts = AxisCounts::default();
        for f in &findings {
            match f.axis {
                Axis::Syntactic => counts.syntactic += 1,
                Axis::Semantic => counts.semantic += 1,
                Axis::Pragmatic => counts.pragmatic += 1,
            }
        }
        let rendered = !findings
            .iter()
            .any(|f| f.axis == Axis::Syntactic && f.severity == Severity::Fatal);
        ErrorReport {
            findings,
            counts,
            rendered,
        }
    }

    /// Report for a chart that could not be produced at all.
    pub fn unrendered(path: &str, message: impl Into<String>) -> ErrorReport {
        ErrorReport::new(vec![Finding {
            code: Code::SynSchema,
            axis: Axis::Syntactic,
            severity: Severity::Fatal,
            path: path.to_string(),
            message: message.into(),
        }])
    }

    pub fn total(&self) -> usize {
        self.counts.total()
    }

    pub fn worst(&self) -> Option<Severity> {
        self.findings.iter().map(|f| f.severity).max()
    }

    pub fn count(&self, code: Code) -> usize {
        self.findings.iter().filter(|f| f.code == code).count()
    }

    /// 0 when clean, 1 with only minor or major findings, 2 with a fatal one.
    pub fn exit_code(&self) -> i32 {
        match self.worst() {
            None => 0,
            Some(Severity::Fatal) => 2,
            Some(_) => 1,
        }
    }
}

pub fn lint(spec: &ChartSpec, profile: &DatasetProfile, table: &Table) -> ErrorReport {
    lint_with(spec, profile, table, &LintOptions::default())
}

pub fn lint_with(
    spec: &ChartSpec,
    profile: &DatasetProfile,
    table: &Table,
    options: &LintOptions,
) -> ErrorReport {
    ErrorReport::new(rules::run(spec, profile, table, options))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_table() {
        assert_eq!(classify_severity("SYN-UNRESOLVED", None), Ok(Severity::Fatal));
        assert_eq!(classify_severity("PRAG-NO-LEGEND", None), Ok(Severity::Minor));
        assert_eq!(classify_severity("PRAG-OVERPLOT", Some(3000.0)), Ok(Severity::Major));
        assert_eq!(classify_severity("PRAG-OVERPLOT", Some(30000.0)), Ok(Severity::Fatal));
        assert_eq!(classify_severity("PRAG-OVERPLOT", Some(2500.0)), Ok(Severity::Minor));
        assert!(matches!(classify_severity("SYN-NOPE", None), Err(LintError::UnknownCode(_))));
        assert!(matches!(
            classify_severity("PRAG-OVERPLOT", None),
            Err(LintError::MissingMagnitude(Code::PragOverplot))
        ));
    }

    #[test]
    fn axis_follows_prefix() {
        for c in Code::ALL {
            let prefix = &c.as_str()[..3];
            let expected = match prefix {
                "SYN" => Axis::Syntactic,
                "SEM" => Axis::Semantic,
                _ => Axis::Pragmatic,
            };
            assert_eq!(c.axis(), expected);
            assert_eq!(c.as_str().parse::<Code>().unwrap(), c);
            assert_eq!(serde_json::to_value(c).unwrap(), c.as_str());
        }
    }

    #[test]
    fn custom_threshold_scales_lines() {
        let o = LintOptions::default().with_overplot_threshold(1000);
        assert_eq!((o.overplot_points, o.overplot_lines), (1000, 100));
        assert_eq!(o.severity(Code::PragOverplot, Some(1500.0)), Ok(Severity::Major));
    }
}
