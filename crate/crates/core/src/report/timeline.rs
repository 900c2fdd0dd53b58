use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use chrono::{DateTime, FixedOffset, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{write_atomic, write_jsonl_atomic, CmdError, ExitClass};
use crate::artifacts::{DeviceEvent, Record};
use crate::cloud::EndpointConfig;
use crate::ids::find_ids;

pub const TIMELINE_FORMAT: &str = "echoshow-timeline/1";

/// Declaration order is the tie-break order for equal timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimelineSource {
    DeviceLog,
    LocalDb,
    CloudVoiceHistory,
    CloudMedia,
    CloudComms,
}

impl TimelineSource {
    fn from_hint(s: &str) -> Option<Self> {
        Some(match s {
            "cloud_voice_history" => TimelineSource::CloudVoiceHistory,
            "cloud_media" => TimelineSource::CloudMedia,
            "cloud_comms" => TimelineSource::CloudComms,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    /// Unix milliseconds, UTC.
    pub timestamp: i64,
    pub source: TimelineSource,
    pub kind: String,
    pub summary: String,
    pub subject_ids: Vec<String>,
    /// Where the event came from: `file:line` for logs, `path#locator` for
    /// records, `acq:N#locator` for cloud responses.
    pub evidence: String,
}

enum Selector {
    Column(&'static str),
    PrefKey(&'static str),
}

struct LocalRule {
    artifact: &'static str,
    time: Selector,
    kind: &'static str,
    summary: Option<&'static str>,
}

const fn col(artifact: &'static str, column: &'static str, kind: &'static str, summary: Option<&'static str>) -> LocalRule {
    LocalRule {
        artifact,
        time: Selector::Column(column),
        kind,
        summary,
    }
}

const fn pref(artifact: &'static str, key: &'static str, kind: &'static str) -> LocalRule {
    LocalRule {
        artifact,
        time: Selector::PrefKey(key),
        kind,
        summary: None,
    }
}

// Only fields known to hold unix milliseconds. Browser and cookie times use
// other epochs and stay off the timeline.
const LOCAL_RULES: &[LocalRule] = &[
    col("prime-video-history", "watched_at", "playback", Some("title")),
    pref("voice-activity-prefs", "last_voice_interaction", "last_voice_interaction"),
    pref("photobooth-prefs", "lastPictureTaken", "last_picture_taken"),
    col("photo-metadata", "created", "photo_created", Some("name")),
    col("notification-log", "event_time_ms", "notification", Some("title")),
    pref("calendar-prefs", "last_boot_time", "last_boot"),
    col("visual-id-recognition", "lastRecognizedTimeMillis", "face_recognized", Some("caveat")),
    pref("alexa-shared-prefs", "lastAppStart", "app_start"),
    pref("alexa-mobilytics", "session.start", "app_session_start"),
    pref("alexa-mobilytics", "session.end", "app_session_end"),
    col("alexa-datastore", "created", "list_item", Some("value")),
    col("alexa-comms-db", "time", "message", Some("text")),
    col("photos-discovery", "uploaded_at", "photo_uploaded", Some("local_path")),
];

/// Plausible unix-millisecond range: 2001 to 2286.
fn as_ms(v: &Value) -> Option<i64> {
    let n = match v {
        Value::Number(n) => n.as_i64()?,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    (1_000_000_000_000..10_000_000_000_000).contains(&n).then_some(n)
}

fn text(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

fn subjects<'a>(strings: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<String> = strings
        .into_iter()
        .flat_map(find_ids)
        .map(|id| id.as_str().to_string())
        .collect();
    set.into_iter().collect()
}

fn device_event(e: &DeviceEvent) -> TimelineEvent {
    let mut parts = vec![e.kind.token().to_string()];
    parts.extend(e.fields.iter().map(|(k, v)| format!("{k}={v}")));
    let subject_ids = e
        .motion
        .as_ref()
        .and_then(|m| m.person_id.as_ref())
        .map(|p| vec![p.as_str().to_string()])
        .unwrap_or_default();
    TimelineEvent {
        timestamp: e.timestamp,
        source: TimelineSource::DeviceLog,
        kind: e.kind.token().to_string(),
        summary: parts.join(" "),
        subject_ids,
        evidence: format!("{}:{}", e.source.file, e.source.line),
    }
}

fn record_event(r: &Record, config: &EndpointConfig) -> Option<TimelineEvent> {
    let evidence = format!("{}#{}", r.source_path, r.locator);
    if let Some(hint) = config.endpoint(&r.artifact_id).and_then(|ep| ep.timeline.as_ref()) {
        return Some(TimelineEvent {
            timestamp: as_ms(r.fields.get(&hint.time_field)?)?,
            source: TimelineSource::from_hint(&hint.source)?,
            kind: hint.kind.clone(),
            summary: text(r.fields.get(&hint.summary_field)),
            subject_ids: subjects(r.strings()),
            evidence,
        });
    }
    let rule = LOCAL_RULES.iter().find(|rule| {
        rule.artifact == r.artifact_id
            && match rule.time {
                Selector::Column(c) => r.fields.contains_key(c),
                Selector::PrefKey(k) => r.fields.get("key").and_then(Value::as_str) == Some(k),
            }
    })?;
    let timestamp = match rule.time {
        Selector::Column(c) => as_ms(&r.fields[c])?,
        Selector::PrefKey(_) => as_ms(r.fields.get("value")?)?,
    };
    Some(TimelineEvent {
        timestamp,
        source: TimelineSource::LocalDb,
        kind: rule.kind.to_string(),
        summary: rule.summary.map(|f| text(r.fields.get(f))).unwrap_or_default(),
        subject_ids: subjects(r.strings()),
        evidence,
    })
}

/// One line of an input file.
#[derive(Deserialize)]
#[serde(untagged)]
enum Input {
    Record(Record),
    Event(DeviceEvent),
}

/// Merge device events and records into one ordered timeline.
///
/// Events are ordered by (timestamp, source, kind), ties keeping input
/// order; an evidence reference seen twice yields one event.
pub fn build_timeline(events: &[DeviceEvent], records: &[Record], config: &EndpointConfig) -> Vec<TimelineEvent> {
    let mut out: Vec<TimelineEvent> = events.iter().map(device_event).collect();
    out.extend(records.iter().filter_map(|r| record_event(r, config)));
    out.sort_by(|a, b| (a.timestamp, a.source, &a.kind).cmp(&(b.timestamp, b.source, &b.kind)));
    let mut seen = BTreeSet::new();
    out.retain(|e| seen.insert(e.evidence.clone()));
    out
}

/// `UTC`, `Z`, or a fixed offset such as `+02:00` / `-0530`.
pub fn parse_tz(s: &str) -> Result<FixedOffset, CmdError> {
    let bad = || CmdError::new(ExitClass::Usage, format!("unrecognized time zone {s:?}; use UTC or ±HH:MM"));
    if s.eq_ignore_ascii_case("utc") || s == "Z" {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let h: i32 = digits[..2].parse().map_err(|_| bad())?;
    let m: i32 = digits[2..].parse().map_err(|_| bad())?;
    if m >= 60 {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

fn render_time(ms: i64, tz: &FixedOffset) -> String {
    match Utc.timestamp_millis_opt(ms).single() {
        Some(t) => DateTime::<Utc>::from(t).with_timezone(tz).format("%Y-%m-%dT%H:%M:%S%.3f%:z").to_string(),
        None => ms.to_string(),
    }
}

/// CSV with times rendered in `tz`; the JSON form always stays UTC.
pub fn render_csv(events: &[TimelineEvent], tz: &FixedOffset) -> Result<Vec<u8>, CmdError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CmdError::new(ExitClass::Io, e.to_string());
    w.write_record(["time", "source", "kind", "summary", "subject_ids", "evidence"]).map_err(fail)?;
    for e in events {
        let source = serde_json::to_value(e.source).expect("unit enum");
        w.write_record([
            render_time(e.timestamp, tz).as_str(),
            source.as_str().unwrap_or_default(),
            &e.kind,
            &e.summary,
            &e.subject_ids.join(" "),
            &e.evidence,
        ])
        .map_err(fail)?;
    }
    w.into_inner().map_err(|e| CmdError::new(ExitClass::Io, e.to_string()))
}

#[derive(Debug, Clone)]
pub struct TimelineArgs {
    /// `records.jsonl` / `events.jsonl` files from extract and acquire.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
    pub tz: Option<String>,
}

pub fn cmd_timeline(args: &TimelineArgs) -> Result<Vec<TimelineEvent>, CmdError> {
    let tz = parse_tz(args.tz.as_deref().unwrap_or("UTC"))?;
    let mut events = Vec::new();
    let mut records = Vec::new();
    for path in &args.inputs {
        let text = fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Input>(line) {
                Ok(Input::Record(r)) => records.push(r),
                Ok(Input::Event(e)) => events.push(e),
                Err(_) => {
                    return Err(CmdError::new(
                        ExitClass::Schema,
                        format!("{}:{}: neither a record nor a device event", path.display(), i + 1),
                    ))
                }
            }
        }
    }
    let timeline = build_timeline(&events, &records, EndpointConfig::builtin());
    write_jsonl_atomic(&args.out, &timeline)?;
    if let Some(csv_path) = &args.csv {
        let bytes = render_csv(&timeline, &tz)?;
        write_atomic(csv_path, |w| w.write_all(&bytes))?;
    }
    Ok(timeline)
}
