use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RoleMap;
use crate::depgraph::DependencyGraph;
use crate::profiler::DatasetProfile;
use crate::spec::{Channel, Kind, Transform, TransformId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("the dataset profile has no columns")]
    EmptyProfile,
    #[error("unknown flag {0:?}")]
    UnknownFlag(String),
    #[error("flag {0} needs a parameter")]
    MissingFlagParam(FlagKind),
    #[error("flag {flag} names unknown {what} {name:?}")]
    UnknownFlagTarget {
        flag: FlagKind,
        what: &'static str,
        name: String,
    },
    #[error("channel {0} is assigned more than once")]
    DuplicateChannel(Channel),
    #[error("channel {0} does not exist in the spec")]
    UnknownChannel(Channel),
    #[error("column {0:?} is not in the dataset")]
    UnknownColumn(String),
    #[error("column {0:?} is assigned to more than one channel")]
    ColumnReused(String),
    #[error("channel {0} cannot be remapped: its field has no single source column")]
    NoSourceSlot(Channel),
    #[error("channel {0} can only keep its own derived field")]
    CannotKeep(Channel),
    #[error("transform {0} does not exist in the spec")]
    UnknownTransform(TransformId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagKind {
    ForceAggregate,
    ForceFilter,
    DropEncoding,
    KeepDomains,
    FacetBy,
}

impl FlagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::ForceAggregate => "force-aggregate",
            FlagKind::ForceFilter => "force-filter",
            FlagKind::DropEncoding => "drop-encoding",
            FlagKind::KeepDomains => "keep-domains",
            FlagKind::FacetBy => "facet-by",
        }
    }

    fn needs_param(self) -> bool {
        matches!(self, FlagKind::DropEncoding | FlagKind::FacetBy | FlagKind::ForceFilter)
    }
}

impl fmt::Display for FlagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A user-set override: `kind` or `kind=param` on the command line.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Flag {
    pub kind: FlagKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
}

impl Flag {
    pub fn new(kind: FlagKind, param: Option<&str>) -> Result<Flag, PlanError> {
        if kind.needs_param() && param.is_none() {
            return Err(PlanError::MissingFlagParam(kind));
        }
        Ok(Flag {
            kind,
            param: param.map(str::to_string),
        })
    }

    /// Checks the parameter against the spec's channels or the dataset's columns.
    pub fn validate(&self, roles: &RoleMap, profile: &DatasetProfile) -> Result<(), PlanError> {
        let unknown = |what, name: &str| PlanError::UnknownFlagTarget {
            flag: self.kind,
            what,
            name: name.to_string(),
        };
        match (self.kind, self.param.as_deref()) {
            (k, None) if k.needs_param() => Err(PlanError::MissingFlagParam(k)),
            (FlagKind::DropEncoding, Some(p)) => match p.parse::<Channel>() {
                Ok(ch) if roles.role(ch).is_some() => Ok(()),
                _ => Err(unknown("channel", p)),
            },
            (FlagKind::FacetBy | FlagKind::ForceFilter, Some(p)) => {
                if profile.column(p).is_some() {
                    Ok(())
                } else {
                    Err(unknown("column", p))
                }
            }
            (FlagKind::ForceAggregate, Some(p)) => match p.parse::<crate::spec::AggregateOp>() {
                Ok(_) => Ok(()),
                Err(_) => Err(unknown("aggregate op", p)),
            },
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.param {
            Some(p) => write!(f, "{}={p}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl FromStr for Flag {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, param) = match s.split_once('=') {
            Some((k, p)) => (k, Some(p)),
            None => (s, None),
        };
        let kind = match kind.trim() {
            "force-aggregate" => FlagKind::ForceAggregate,
            "force-filter" => FlagKind::ForceFilter,
            "drop-encoding" => FlagKind::DropEncoding,
            "keep-domains" => FlagKind::KeepDomains,
            "facet-by" => FlagKind::FacetBy,
            other => return Err(PlanError::UnknownFlag(other.to_string())),
        };
        Flag::new(kind, param.map(str::trim))
    }
}

/// How a new column enters the spec.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignMode {
    /// The encoding reads the column itself, with the column's kind.
    #[default]
    Direct,
    /// The column replaces the source column of the role's transform chain;
    /// derived fields are recomputed from it and the encoding kind is kept.
    Remap,
    /// The channel keeps its derived field, which needs no source column
    /// (for example a count).
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Assignment {
    pub channel: Channel,
    pub old_field: String,
    /// `None` drops the channel; `"DROP"` is accepted on input.
    #[serde(deserialize_with = "drop_or_field")]
    pub new_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_kind: Option<Kind>,
    pub score: f64,
    #[serde(default)]
    pub mode: AssignMode,
}

fn drop_or_field<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|f| f != "DROP"))
}

impl Assignment {
    pub fn dropped(&self) -> bool {
        self.new_field.is_none()
    }

    pub fn drop(channel: Channel, old_field: &str) -> Assignment {
        Assignment {
            channel,
            old_field: old_field.to_string(),
            new_field: None,
            new_kind: None,
            score: 0.0,
            mode: AssignMode::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuideUpdate {
    /// Encoding pointer (`/encoding/x`, `/facet`) or `/title`.
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_format: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub remove_format: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScaleUpdate {
    pub channel: Channel,
    /// A literal domain, or the string `"CLEAR"` to remove the domain.
    pub new_domain: Value,
}

impl ScaleUpdate {
    pub fn clears(&self) -> bool {
        self.new_domain.as_str() == Some("CLEAR")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Heuristic,
    Advisor,
}

/// The editable plan between mapping and rewriting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MappingPlan {
    /// New data location written into the spec.
    pub source: String,
    /// One entry per spec channel, in channel order.
    pub assignments: Vec<Assignment>,
    #[serde(default)]
    pub transforms_to_remove: Vec<TransformId>,
    /// Appended to the top-level pipeline.
    #[serde(default)]
    pub transforms_to_add: Vec<Transform>,
    #[serde(default)]
    pub guide_updates: Vec<GuideUpdate>,
    #[serde(default)]
    pub scale_updates: Vec<ScaleUpdate>,
    #[serde(default)]
    pub flags: Vec<Flag>,
    #[serde(default)]
    pub provenance: Provenance,
    /// Graph nodes downstream of each replaced field, for review.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub impacts: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MappingPlan {
    pub fn assignment(&self, channel: Channel) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.channel == channel)
    }

    pub fn has_flag(&self, kind: FlagKind) -> bool {
        self.flags.iter().any(|f| f.kind == kind)
    }

    /// Structural checks: channels exist and appear once, columns exist and
    /// bind to one target (one source field, or one chain source column), and
    /// removed transforms exist.
    pub fn validate(
        &self,
        roles: &RoleMap,
        graph: &DependencyGraph,
        profile: &DatasetProfile,
    ) -> Result<(), PlanError> {
        let mut channels = BTreeSet::new();
        let mut targets: BTreeMap<&str, String> = BTreeMap::new();
        for a in &self.assignments {
            if !channels.insert(a.channel) {
                return Err(PlanError::DuplicateChannel(a.channel));
            }
            let role = roles.role(a.channel).ok_or(PlanError::UnknownChannel(a.channel))?;
            let Some(col) = &a.new_field else { continue };
            if a.mode == AssignMode::Keep {
                if !role.is_derived || *col != role.current_field {
                    return Err(PlanError::CannotKeep(a.channel));
                }
                continue;
            }
            if profile.column(col).is_none() {
                return Err(PlanError::UnknownColumn(col.clone()));
            }
            let target = match a.mode {
                AssignMode::Remap => {
                    let slot = role
                        .source_slot
                        .as_ref()
                        .filter(|_| role.is_derived)
                        .ok_or(PlanError::NoSourceSlot(a.channel))?;
                    format!("slot:{slot}")
                }
                AssignMode::Direct => format!("field:{}", a.old_field),
                AssignMode::Keep => unreachable!("kept channels bind no column"),
            };
            match targets.get(col.as_str()) {
                Some(t) if *t != target => return Err(PlanError::ColumnReused(col.clone())),
                _ => {
                    targets.insert(col, target);
                }
            }
        }
        for t in &self.transforms_to_remove {
            if graph.node(&DependencyGraph::transform_node_id(t)).is_none() {
                return Err(PlanError::UnknownTransform(*t));
            }
        }
        for f in &self.flags {
            f.validate(roles, profile)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_and_print() {
        let f: Flag = "facet-by=division".parse().unwrap();
        assert_eq!(f.kind, FlagKind::FacetBy);
        assert_eq!(f.to_string(), "facet-by=division");
        assert_eq!("keep-domains".parse::<Flag>().unwrap().param, None);
        assert_eq!(
            "drop-encoding".parse::<Flag>(),
            Err(PlanError::MissingFlagParam(FlagKind::DropEncoding))
        );
        assert!(matches!("pivot".parse::<Flag>(), Err(PlanError::UnknownFlag(_))));
    }

    #[test]
    fn plan_json_uses_null_for_drop() {
        let a = Assignment::drop(Channel::Y, "value");
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["newField"], Value::Null);
        assert_eq!(v["mode"], "direct");
        let back: Assignment = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
        let spelled: Assignment = serde_json::from_str(
            r#"{"channel":"y","oldField":"value","newField":"DROP","score":0}"#,
        )
        .unwrap();
        assert_eq!(spelled, a);
    }
}
