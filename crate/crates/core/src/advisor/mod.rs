//! Optional model-backed advice for the role, mapping and refinement stages.
//!
//! Every stage has a deterministic fallback, so an advisor can only ever
//! replace an intermediate result that then passes the same validation as
//! the heuristic one.

mod heuristic;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use heuristic::HeuristicAdvisor;
pub use remote::{RemoteAdvisor, RemoteConfig};

use crate::depgraph::build_graph_lenient;
use crate::mapper::{Flag, MappingPlan, RoleMap};
use crate::profiler::DatasetProfile;
use crate::spec::{parse_spec, serialize_spec, ChartSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Roles,
    Mapping,
    Refinement,
    /// The whole retargeting in a single request, for comparison runs.
    OneShot,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Roles => "roles",
            Stage::Mapping => "mapping",
            Stage::Refinement => "refinement",
            Stage::OneShot => "one-shot",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdviceRequest {
    pub stage: Stage,
    /// Canonical text of the spec being worked on.
    pub spec_text: String,
    pub profile: DatasetProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<RoleMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<MappingPlan>,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl AdviceRequest {
    pub fn roles(spec: &ChartSpec, profile: &DatasetProfile) -> AdviceRequest {
        AdviceRequest {
            stage: Stage::Roles,
            spec_text: serialize_spec(spec),
            profile: profile.clone(),
            roles: None,
            plan: None,
            flags: Vec::new(),
        }
    }

    pub fn mapping(roles: &RoleMap, profile: &DatasetProfile, flags: &[Flag]) -> AdviceRequest {
        AdviceRequest {
            stage: Stage::Mapping,
            spec_text: serialize_spec(roles.spec()),
            profile: profile.clone(),
            roles: Some(roles.clone()),
            plan: None,
            flags: flags.to_vec(),
        }
    }

    /// `spec` is the already-rewritten spec that refinement may polish.
    pub fn refinement(
        spec: &ChartSpec,
        profile: &DatasetProfile,
        plan: &MappingPlan,
    ) -> AdviceRequest {
        AdviceRequest {
            stage: Stage::Refinement,
            spec_text: serialize_spec(spec),
            profile: profile.clone(),
            roles: None,
            plan: Some(plan.clone()),
            flags: plan.flags.clone(),
        }
    }

    pub fn one_shot(spec: &ChartSpec, profile: &DatasetProfile, flags: &[Flag]) -> AdviceRequest {
        AdviceRequest {
            stage: Stage::OneShot,
            spec_text: serialize_spec(spec),
            profile: profile.clone(),
            roles: None,
            plan: None,
            flags: flags.to_vec(),
        }
    }

    pub(crate) fn spec(&self) -> Result<ChartSpec, AdviceError> {
        parse_spec(&self.spec_text).map_err(|e| AdviceError::InvalidRequest(e.to_string()))
    }
}

/// Baseline retargeting: the spec and the new data summary in one request.
pub fn one_shot_retarget(
    advisor: &dyn Advisor,
    spec: &ChartSpec,
    profile: &DatasetProfile,
) -> Result<String, AdviceError> {
    let resp = advisor.advise(&AdviceRequest::one_shot(spec, profile, &[]))?;
    match resp.payload {
        AdvicePayload::SpecText(t) => Ok(t),
        _ => Err(AdviceError::rejected("expected spec text", "")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdvicePayload {
    Roles(RoleMap),
    Plan(MappingPlan),
    /// Canonical spec text.
    SpecText(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdviceResponse {
    pub payload: AdvicePayload,
    pub rationale: Option<String>,
    /// Identifier of the advisor that produced the response.
    pub backend: String,
}

#[derive(Debug, thiserror::Error)]
pub enum AdviceError {
    #[error("no advisor backend handles this stage")]
    NoBackend,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("advisor timed out after {0} s")]
    Timeout(u64),
    #[error("advisor response rejected: {reason}")]
    Rejected { reason: String, raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl AdviceError {
    fn rejected(reason: impl Into<String>, raw: &str) -> AdviceError {
        AdviceError::Rejected {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

pub trait Advisor: Send + Sync {
    fn id(&self) -> &str;
    fn advise(&self, request: &AdviceRequest) -> Result<AdviceResponse, AdviceError>;

    /// Concurrent requests the backend accepts; `None` means no limit.
    fn max_in_flight(&self) -> Option<usize> {
        None
    }
}

/// The body of the single fenced code block in `text`, or the whole text
/// when it has none.
pub fn extract_block(text: &str) -> Result<&str, AdviceError> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let Some(end) = after[body_start..].find("```") else {
            return Err(AdviceError::rejected("unterminated code block", text));
        };
        blocks.push(&after[body_start..body_start + end]);
        rest = &after[body_start + end + 3..];
    }
    match blocks.as_slice() {
        [] => Ok(text.trim()),
        [one] => Ok(one.trim()),
        _ => Err(AdviceError::rejected("ambiguous code blocks", text)),
    }
}

/// Parses a model's reply for `request` into a typed payload. Roles are
/// checked against the request's spec; specs must parse.
pub fn parse_reply(request: &AdviceRequest, text: &str) -> Result<AdvicePayload, AdviceError> {
    let body = extract_block(text)?;
    match request.stage {
        Stage::Roles => {
            let roles: RoleMap = serde_json::from_str(body)
                .map_err(|e| AdviceError::rejected(format!("role map: {e}"), text))?;
            let spec = request.spec()?;
            roles
                .attach(&spec)
                .map(AdvicePayload::Roles)
                .map_err(|e| AdviceError::rejected(e, text))
        }
        Stage::Mapping => {
            let plan: MappingPlan = serde_json::from_str(body)
                .map_err(|e| AdviceError::rejected(format!("mapping plan: {e}"), text))?;
            let spec = request.spec()?;
            let roles = match &request.roles {
                Some(r) => r.clone().attach(&spec).map_err(AdviceError::InvalidRequest)?,
                None => return Err(AdviceError::InvalidRequest("mapping needs a role map".into())),
            };
            plan.validate(&roles, &build_graph_lenient(&spec), &request.profile)
                .map_err(|e| AdviceError::rejected(format!("mapping plan: {e}"), text))?;
            Ok(AdvicePayload::Plan(plan))
        }
        Stage::Refinement | Stage::OneShot => parse_spec(body)
            .map(|s| AdvicePayload::SpecText(serialize_spec(&s)))
            .map_err(|e| AdviceError::rejected(format!("spec: {e}"), text)),
    }
}
