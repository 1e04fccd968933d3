use std::collections::BTreeSet;

use super::{changed_paths, RewriteError, RewriteLog};
use crate::dataflow;
use crate::profiler::{Cell, Dataset};
use crate::spec::{ChartSpec, Domain, EncodingPath, Kind};

fn encoded_values(spec: &ChartSpec, data: &Dataset, path: &EncodingPath) -> Result<Vec<Cell>, RewriteError> {
    let enc = spec.encoding(path).expect("path from encodings()");
    dataflow::encoded_values(spec, &data.table, path)?
        .ok_or_else(|| RewriteError::MissingField(enc.field.clone()))
}

fn numeric_extent(cells: &[Cell]) -> Option<(f64, f64)> {
    cells.iter().filter_map(Cell::as_f64).fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

fn categories(cells: &[Cell]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    cells
        .iter()
        .filter(|c| !c.is_null())
        .map(Cell::to_string)
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// Recomputes literal domains on channels whose field or kind changed:
/// `[min, max]` for quantitative channels, first-appearance categories for
/// nominal and ordinal ones. Domains that fit neither (a numeric domain on a
/// now-temporal channel) are removed. `keep_domains` leaves all domains alone.
pub fn refresh_scales(
    spec: &ChartSpec,
    original: &ChartSpec,
    data: &Dataset,
    keep_domains: bool,
) -> Result<(ChartSpec, RewriteLog), RewriteError> {
    let mut out = spec.clone();
    if keep_domains {
        return Ok((out, RewriteLog::default()));
    }
    for path in changed_paths(spec, original) {
        let enc = spec.encoding(&path).expect("changed path exists");
        let Some(domain) = enc.scale.as_ref().and_then(|s| s.domain.as_ref()) else {
            continue;
        };
        if matches!(domain, Domain::Other(_)) {
            continue;
        }
        let next = match enc.kind {
            Kind::Quantitative => {
                numeric_extent(&encoded_values(spec, data, &path)?).map(|(lo, hi)| Domain::Numeric { lo, hi })
            }
            Kind::Nominal | Kind::Ordinal => {
                let c = categories(&encoded_values(spec, data, &path)?);
                (!c.is_empty()).then_some(Domain::Categories(c))
            }
            Kind::Temporal => None,
        };
        let target = out.encoding_mut(&path).expect("changed path exists");
        let scale = target.scale.as_mut().expect("scale exists");
        match next {
            Some(d) => scale.domain = Some(d),
            None if enc.kind == Kind::Temporal => {
                scale.domain = None;
                if scale.is_bare() {
                    target.scale = None;
                }
            }
            None => {}
        }
    }
    let mut log = RewriteLog::default();
    log.record(spec, &out);
    Ok((out, log))
}
