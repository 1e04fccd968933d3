use std::collections::BTreeSet;

use super::{name_tokens, Role};
use crate::profiler::ColumnProfile;
use crate::spec::{Channel, Kind};

pub const TYPE_WEIGHT: f64 = 0.6;
pub const NAME_WEIGHT: f64 = 0.25;
pub const CARDINALITY_WEIGHT: f64 = 0.15;
/// Channels whose best score falls below this are dropped.
pub const DROP_THRESHOLD: f64 = 0.2;

/// Symmetric compatibility between a role kind and a column kind.
pub fn type_compat(a: Kind, b: Kind) -> f64 {
    use Kind::*;
    match (a, b) {
        _ if a == b => 1.0,
        (Quantitative, Ordinal) | (Ordinal, Quantitative) => 0.5,
        (Ordinal, Nominal) | (Nominal, Ordinal) => 0.5,
        (Temporal, Quantitative) | (Quantitative, Temporal) => 0.25,
        _ => 0.0,
    }
}

/// Jaccard overlap of the lower-cased name tokens.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<String> = name_tokens(a).into_iter().collect();
    let tb: BTreeSet<String> = name_tokens(b).into_iter().collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

pub fn cardinality_similarity(role_distinct: usize, col_distinct: usize) -> f64 {
    let d = ((role_distinct + 1) as f64).log10() - ((col_distinct + 1) as f64).log10();
    (1.0 - d.abs()).clamp(0.0, 1.0)
}

/// Roles whose values are read as categories: discrete kinds, and channels
/// that always partition marks into groups.
fn is_discrete_role(role: &Role) -> bool {
    role.kind.is_discrete() || role.channel.is_structural() || role.channel == Channel::Shape
}

/// Weighted fit of a column for a role, in [0, 1].
pub fn score_mapping(role: &Role, col: &ColumnProfile) -> f64 {
    let kind = type_compat(role.kind, col.kind);
    let mut name = name_similarity(&role.current_field, &col.name);
    if let Some(slot) = &role.source_slot {
        name = name.max(name_similarity(slot, &col.name));
    }
    let card = match role.cardinality {
        Some(d) if is_discrete_role(role) => cardinality_similarity(d, col.distinct_count),
        _ => 1.0,
    };
    (TYPE_WEIGHT * kind + NAME_WEIGHT * name + CARDINALITY_WEIGHT * card).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn role(channel: Channel, field: &str, kind: Kind, cardinality: Option<usize>) -> Role {
        Role {
            channel,
            paths: vec![],
            current_field: field.into(),
            kind,
            is_derived: false,
            transform_chain: vec![],
            source_slot: None,
            cardinality,
        }
    }

    fn col(name: &str, kind: Kind, distinct: usize) -> ColumnProfile {
        ColumnProfile {
            name: name.into(),
            kind,
            row_count: 100,
            null_count: 0,
            distinct_count: distinct,
            numeric: None,
            temporal: None,
            samples: vec![],
            list_valued: false,
            warning: None,
        }
    }

    #[test]
    fn kind_matrix_is_symmetric() {
        for a in Kind::ALL {
            for b in Kind::ALL {
                assert_eq!(type_compat(a, b), type_compat(b, a));
            }
            assert_eq!(type_compat(a, a), 1.0);
        }
        assert_eq!(type_compat(Kind::Temporal, Kind::Nominal), 0.0);
    }

    #[test]
    fn identical_role_and_column_score_one() {
        let r = role(Channel::Color, "origin", Kind::Nominal, Some(3));
        assert_eq!(score_mapping(&r, &col("origin", Kind::Nominal, 3)), 1.0);
    }

    #[test]
    fn mean_temp_against_unemployment() {
        let r = role(Channel::Color, "mean_temp", Kind::Quantitative, None);
        let s = score_mapping(&r, &col("unemployment", Kind::Quantitative, 500));
        let oracle = 0.6 * 1.0 + 0.25 * 0.0 + 0.15 * 1.0;
        assert!((s - oracle).abs() < 1e-12);
        assert!((s - 0.75).abs() < 1e-12);
    }

    #[test]
    fn month_facet_against_division() {
        let r = role(Channel::Facet, "Month", Kind::Temporal, Some(12));
        let s = score_mapping(&r, &col("division", Kind::Nominal, 9));
        let card = 1.0 - ((13f64).log10() - (10f64).log10()).abs();
        assert!((s - 0.15 * card).abs() < 1e-12);
        assert!(s < DROP_THRESHOLD);
    }

    #[test]
    fn jaccard_on_tokens() {
        assert_eq!(name_similarity("petalLength", "petal_width"), 1.0 / 3.0);
        assert_eq!(name_similarity("", ""), 0.0);
    }
}
