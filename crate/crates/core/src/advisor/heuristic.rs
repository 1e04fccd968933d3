use super::{AdviceError, AdvicePayload, AdviceRequest, AdviceResponse, Advisor, Stage};
use crate::depgraph::build_graph_lenient;
use crate::mapper::{extract_roles, plan_mapping};

/// Deterministic advisor that answers with the built-in heuristics.
///
/// Refinement returns the rewritten spec unchanged: guide and scale refresh
/// already ran in the rewriter. One-shot retargeting has no heuristic.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicAdvisor;

impl Advisor for HeuristicAdvisor {
    fn id(&self) -> &str {
        "heuristic"
    }

    fn advise(&self, request: &AdviceRequest) -> Result<AdviceResponse, AdviceError> {
        let spec = request.spec()?;
        let payload = match request.stage {
            Stage::Roles => AdvicePayload::Roles(extract_roles(&spec, &build_graph_lenient(&spec))),
            Stage::Mapping => {
                let roles = match &request.roles {
                    Some(r) => r.clone().attach(&spec).map_err(AdviceError::InvalidRequest)?,
                    None => extract_roles(&spec, &build_graph_lenient(&spec)),
                };
                let plan = plan_mapping(&roles, &request.profile, &request.flags, None)
                    .map_err(|e| AdviceError::InvalidRequest(e.to_string()))?;
                AdvicePayload::Plan(plan)
            }
            Stage::Refinement => AdvicePayload::SpecText(request.spec_text.clone()),
            Stage::OneShot => return Err(AdviceError::NoBackend),
        };
        Ok(AdviceResponse {
            payload,
            rationale: None,
            backend: self.id().to_string(),
        })
    }
}
