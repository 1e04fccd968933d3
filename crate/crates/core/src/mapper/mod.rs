mod assign;
mod plan;
mod planner;
mod roles;
mod score;
pub(crate) mod substitute;
mod tokens;

pub use assign::{assign, greedy, optimal, total, ScoreMatrix, EPS};
pub use roles::{extract_roles, Role, RoleMap, TitleSlot};
pub use score::{
    cardinality_similarity, name_similarity, score_mapping, type_compat, DROP_THRESHOLD,
};
pub use tokens::name_tokens;
pub use plan::{
    AssignMode, Assignment, Flag, FlagKind, GuideUpdate, MappingPlan, PlanError, Provenance,
    ScaleUpdate,
};
pub use planner::plan_mapping;
