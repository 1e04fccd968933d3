use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};

use super::Cell;

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y/%m/%d %H:%M:%S",
];
const DATE_FORMATS: [&str; 4] = ["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y", "%b %d %Y"];

fn midnight(d: NaiveDate) -> NaiveDateTime {
    d.and_time(NaiveTime::MIN)
}

/// Parses a date or date-time string. Bare four-digit years are accepted
/// only when `allow_year` is set (the column name suggests a year).
pub(crate) fn parse_text(s: &str, allow_year: bool) -> Option<NaiveDateTime> {
    let t = s.trim();
    if t.len() < 4 {
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.naive_utc());
    }
    for f in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, f) {
            return Some(dt);
        }
    }
    for f in DATE_FORMATS {
        if let Ok(d) = NaiveDate::parse_from_str(t, f) {
            return Some(midnight(d));
        }
    }
    if t.len() == 7 && t.as_bytes()[4] == b'-' {
        if let Ok(d) = NaiveDate::parse_from_str(&format!("{t}-01"), "%Y-%m-%d") {
            return Some(midnight(d));
        }
    }
    if allow_year && t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()) {
        return year(t.parse().ok()?);
    }
    None
}

fn year(y: i32) -> Option<NaiveDateTime> {
    (1000..=9999)
        .contains(&y)
        .then(|| NaiveDate::from_ymd_opt(y, 1, 1).map(midnight))
        .flatten()
}

pub(crate) fn parse_cell(cell: &Cell, allow_year: bool) -> Option<NaiveDateTime> {
    match cell {
        Cell::Text(s) => parse_text(s, allow_year),
        Cell::Number(n) if allow_year && n.fract() == 0.0 => year(*n as i32),
        _ => None,
    }
}
