//! Device events lexed from DropBox log lines.
//!
//! A line yields an event when one of the trigger tokens below appears in it
//! as a whole word (`[A-Za-z0-9_]+`). The first trigger on a line wins.
//! Timestamp: a leading `YYYY-MM-DD HH:MM:SS[.mmm]`, a leading 13-digit unix
//! ms value, or a logcat `MM-DD HH:MM:SS[.mmm]` (year taken from the archive),
//! else the archive timestamp. Clock values are read as UTC, with no zone
//! inference.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate, NaiveDateTime, TimeZone, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DropboxLogEntry, LogCategory};
use crate::ids::{UserId, UserIdKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    WakeWord,
    Button,
    Touch,
    PrivacyModeOn,
    PrivacyModeOff,
    CameraEnabled,
    CameraDisabled,
    Motion,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::WakeWord,
        EventKind::Button,
        EventKind::Touch,
        EventKind::PrivacyModeOn,
        EventKind::PrivacyModeOff,
        EventKind::CameraEnabled,
        EventKind::CameraDisabled,
        EventKind::Motion,
    ];

    pub fn token(self) -> &'static str {
        match self {
            EventKind::WakeWord => "WAKE_WORD",
            EventKind::Button => "BUTTON_EVENT",
            EventKind::Touch => "TOUCH_EVENT",
            EventKind::PrivacyModeOn => "PRIVACY_MODE_ON",
            EventKind::PrivacyModeOff => "PRIVACY_MODE_OFF",
            EventKind::CameraEnabled => "CAMERA_ENABLED",
            EventKind::CameraDisabled => "CAMERA_DISABLED",
            EventKind::Motion => "MOTION",
        }
    }

    /// The only log category this event is taken from.
    pub fn category(self) -> LogCategory {
        match self {
            EventKind::Motion => LogCategory::Main,
            _ => LogCategory::System,
        }
    }

    fn from_token(tok: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.token() == tok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub is_person: Option<bool>,
    /// Explicit `enrolled=`, else true iff a personId was reported.
    pub enrolled: bool,
    pub face_quality: Option<f64>,
    pub person_id: Option<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventSource {
    pub file: String,
    /// 1-based line number inside the decompressed archive.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEvent {
    pub kind: EventKind,
    pub timestamp: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motion: Option<Motion>,
    pub source: EventSource,
    /// `key=value` pairs after the trigger token, verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

fn words(line: &str) -> impl Iterator<Item = (usize, &str)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9_]+").unwrap())
        .find_iter(line)
        .map(|m| (m.start(), m.as_str()))
}

fn kv_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)=([^\s,;]+)").unwrap())
}

fn ts_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?:(?P<full>\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}(?:\.\d{1,3})?)|(?P<ms>\d{13})\b|(?P<logcat>\d{2}-\d{2} \d{2}:\d{2}:\d{2}(?:\.\d{1,3})?))",
        )
        .unwrap()
    })
}

fn parse_clock(text: &str, fmt_with_ms: &str, fmt_plain: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(text, fmt_with_ms)
        .or_else(|_| NaiveDateTime::parse_from_str(text, fmt_plain))
        .ok()
}

/// Timestamp of a log line in unix ms, if the line carries one.
pub fn line_timestamp(line: &str, archive_ms: i64) -> Option<i64> {
    let c = ts_re().captures(line)?;
    if let Some(m) = c.name("full") {
        let t = m.as_str().replace('T', " ");
        return parse_clock(&t, "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M:%S").map(|d| d.and_utc().timestamp_millis());
    }
    if let Some(m) = c.name("ms") {
        return m.as_str().parse().ok();
    }
    let m = c.name("logcat")?;
    let archive = Utc.timestamp_millis_opt(archive_ms).single()?;
    let at_year = |y: i32| {
        parse_clock(&format!("{y}-{}", m.as_str()), "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M:%S")
            .map(|d| d.and_utc().timestamp_millis())
    };
    let t = at_year(archive.year())?;
    // a December line in a January archive belongs to the previous year
    if t > archive_ms + 86_400_000 {
        return at_year(archive.year() - 1).or(Some(t));
    }
    Some(t)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn motion_from(fields: &BTreeMap<String, String>) -> Motion {
    let person_id = fields
        .get("personId")
        .and_then(|v| UserId::new(UserIdKind::PersonId, v.as_str()).ok());
    Motion {
        is_person: fields.get("person").and_then(|v| parse_bool(v)),
        enrolled: fields
            .get("enrolled")
            .and_then(|v| parse_bool(v))
            .unwrap_or(person_id.is_some()),
        face_quality: fields.get("quality").and_then(|v| v.parse::<f64>().ok()).filter(|q| q.is_finite()),
        person_id,
    }
}

/// Lex one line; `None` when it carries no trigger valid for `category`.
pub fn lex_line(line: &str, category: LogCategory, archive_ms: i64, source: EventSource) -> Option<DeviceEvent> {
    let (at, kind) = words(line).find_map(|(at, w)| {
        EventKind::from_token(w)
            .filter(|k| k.category() == category)
            .map(|k| (at, k))
    })?;
    let rest = &line[at + kind.token().len()..];
    let fields: BTreeMap<String, String> = kv_re()
        .captures_iter(rest)
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect();
    let timestamp = line_timestamp(line, archive_ms).unwrap_or(archive_ms);
    Some(DeviceEvent {
        kind,
        timestamp,
        motion: (kind == EventKind::Motion).then(|| motion_from(&fields)),
        source,
        fields,
    })
}

/// All events in `entries`, sorted by timestamp then source position.
pub fn extract_events(entries: &[DropboxLogEntry]) -> Vec<DeviceEvent> {
    let mut out: Vec<DeviceEvent> = entries
        .iter()
        .filter(|e| matches!(e.category, LogCategory::System | LogCategory::Main))
        .flat_map(|e| {
            e.lines.iter().enumerate().filter_map(move |(i, line)| {
                lex_line(
                    line,
                    e.category,
                    e.timestamp,
                    EventSource {
                        file: e.source_path.clone(),
                        line: i + 1,
                    },
                )
            })
        })
        .collect();
    out.sort_by(|a, b| (a.timestamp, &a.source, a.kind).cmp(&(b.timestamp, &b.source, b.kind)));
    out
}

/// Calendar helper for fixture generators: unix ms for a UTC clock value.
pub fn utc_ms(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32, ms: u32) -> i64 {
    NaiveDate::from_ymd_opt(y, mo, d)
        .and_then(|d| d.and_hms_milli_opt(h, mi, s, ms))
        .expect("valid date")
        .and_utc()
        .timestamp_millis()
}
