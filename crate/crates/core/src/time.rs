//! Epoch-second timestamps.
//!
//! Rows of tables without a timestamp column carry [`SENTINEL_STATIC`],
//! which orders before every real time and therefore passes every
//! `τ ≤ t` filter.

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer};

pub type Timestamp = i64;

/// Time of a non-temporal row (minus infinity).
pub const SENTINEL_STATIC: Timestamp = i64::MIN;

pub const SECONDS_PER_DAY: i64 = 86_400;

pub fn is_static(t: Timestamp) -> bool {
    t == SENTINEL_STATIC
}

/// Parses an ISO-8601 date or datetime, or a bare integer of epoch seconds.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(ndt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&ndt).timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|ndt| Utc.from_utc_datetime(&ndt).timestamp())
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`. The static sentinel formats as an
/// empty string.
pub fn format_timestamp(t: Timestamp) -> String {
    if is_static(t) {
        return String::new();
    }
    match Utc.timestamp_opt(t, 0).single() {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// Serde helper accepting either epoch seconds or an ISO-8601 string.
pub fn deserialize_time<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => Ok(v),
        Raw::Str(s) => parse_timestamp(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unparseable timestamp '{s}'"))),
    }
}
