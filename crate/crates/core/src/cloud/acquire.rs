use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::acqlog::{sha256_hex, AcquisitionLog};
use super::client::{items_of, response_records};
use super::{CloudError, EndpointConfig, EndpointDescriptor, ExchangeCounts, Session};
use crate::artifacts::Record;
use crate::ids::{UserId, UserIdKind};

const MAX_COMBINATIONS: usize = 1000;

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// One cloud-side voice request. Field names follow the response items; the
/// exact upstream schema is not public, so this shape is a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceRequestRecord {
    pub utterance_id: String,
    pub timestamp: i64,
    pub device: Option<String>,
    pub transcript: Option<String>,
    pub intent: Option<String>,
    pub resource_ids: Vec<String>,
    pub person_id_v2: Option<UserId>,
}

impl VoiceRequestRecord {
    pub fn from_fields(f: &Map<String, Value>) -> Result<Self, String> {
        let utterance_id = f
            .get("utteranceId")
            .and_then(scalar_string)
            .ok_or("record without utteranceId")?;
        let timestamp = f
            .get("timestamp")
            .and_then(Value::as_i64)
            .ok_or_else(|| format!("{utterance_id}: no numeric timestamp"))?;
        let text = |k: &str| f.get(k).and_then(Value::as_str).map(str::to_string);
        let person_id_v2 = match f.get("personIdV2").and_then(Value::as_str) {
            Some(s) if !s.is_empty() => Some(
                UserId::new(UserIdKind::PersonIdV2, s).map_err(|e| format!("{utterance_id}: {e}"))?,
            ),
            _ => None,
        };
        Ok(VoiceRequestRecord {
            utterance_id,
            timestamp,
            device: text("deviceName"),
            transcript: text("transcript"),
            intent: text("intent"),
            resource_ids: f
                .get("resourceIds")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(scalar_string).collect())
                .unwrap_or_default(),
            person_id_v2,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioBlob {
    pub utterance_id: String,
    pub sha256: String,
    pub size: u64,
    pub seq: u64,
}

#[derive(Debug, Default, Serialize)]
pub struct VoiceHistory {
    pub records: Vec<VoiceRequestRecord>,
    pub audio: Vec<AudioBlob>,
    pub notices: Vec<String>,
}

fn endpoint<'a>(session: &'a Session, id: &str) -> Result<&'a EndpointDescriptor, CloudError> {
    session
        .config()
        .endpoint(id)
        .ok_or_else(|| CloudError::Config(format!("endpoint {id} not in catalog")))
}

/// Voice requests in `[start_ms, end_ms)` plus their audio. An empty window
/// sends nothing.
pub fn acquire_voice_history(session: &Session, start_ms: i64, end_ms: i64) -> Result<VoiceHistory, CloudError> {
    if start_ms > end_ms {
        return Err(CloudError::InvalidArgument(format!(
            "window start {start_ms} is after end {end_ms}"
        )));
    }
    let mut out = VoiceHistory::default();
    if start_ms == end_ms {
        return Ok(out);
    }
    let history = endpoint(session, "voice-history")?;
    let audio = endpoint(session, "voice-audio")?;
    let window = history
        .window
        .as_ref()
        .ok_or_else(|| CloudError::Config("voice-history has no window".into()))?;
    let args = BTreeMap::from([
        (window.start.clone(), start_ms.to_string()),
        (window.end.clone(), end_ms.to_string()),
    ]);
    for page in session.fetch_all(history, &args)? {
        let doc = page.json().map_err(|e| CloudError::Parse {
            endpoint: history.id.clone(),
            message: e.to_string(),
        })?;
        for item in items_of(history, &doc) {
            let Value::Object(m) = item else {
                out.notices.push(format!("acq:{}: non-object voice record", page.seq));
                continue;
            };
            match VoiceRequestRecord::from_fields(&m) {
                Ok(r) => out.records.push(r),
                Err(e) => out.notices.push(format!("acq:{}: {e}", page.seq)),
            }
        }
    }
    for r in &out.records {
        let args = BTreeMap::from([("uid".to_string(), r.utterance_id.clone())]);
        match session.fetch(audio, &args, None) {
            Ok(p) => out.audio.push(AudioBlob {
                utterance_id: r.utterance_id.clone(),
                sha256: sha256_hex(&p.body),
                size: p.body.len() as u64,
                seq: p.seq,
            }),
            Err(CloudError::Http { status: 404, .. }) => {
                out.notices.push(format!("{}: no audio (404)", r.utterance_id))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaItem {
    pub photo_id: String,
    pub owner_id: Option<String>,
    pub name: Option<String>,
    pub created: Option<Value>,
    pub sha256: Option<String>,
    pub size: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Default, Serialize)]
pub struct MediaReport {
    pub items: Vec<MediaItem>,
}

impl MediaReport {
    pub fn failures(&self) -> impl Iterator<Item = &MediaItem> {
        self.items.iter().filter(|i| i.error.is_some())
    }
}

/// List the photo library, then download each item. Per-item failures are
/// recorded on the item; listing failures abort.
pub fn acquire_media(session: &Session) -> Result<MediaReport, CloudError> {
    let search = endpoint(session, "drive-search")?;
    let download = endpoint(session, "drive-download")?;
    let mut report = MediaReport::default();
    for page in session.fetch_all(search, &BTreeMap::new())? {
        let doc = page.json().unwrap_or(Value::Null);
        for item in items_of(search, &doc) {
            let Some(photo_id) = item.get("id").and_then(scalar_string) else {
                continue;
            };
            let owner_id = item.get("ownerId").and_then(scalar_string);
            let mut m = MediaItem {
                photo_id: photo_id.clone(),
                owner_id: owner_id.clone(),
                name: item.get("name").and_then(Value::as_str).map(str::to_string),
                created: item.get("createdDate").cloned(),
                sha256: None,
                size: None,
                error: None,
            };
            let mut args = BTreeMap::from([("photoId".to_string(), photo_id)]);
            if let Some(o) = owner_id {
                args.insert("ownerId".into(), o);
            }
            match session.fetch(download, &args, None) {
                Ok(p) => {
                    m.sha256 = Some(sha256_hex(&p.body));
                    m.size = Some(p.body.len() as u64);
                }
                Err(e @ CloudError::RefreshRejected { .. }) => return Err(e),
                Err(e) => m.error = Some(e.to_string()),
            }
            report.items.push(m);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct AcquireOptions {
    /// Restrict to these endpoint ids (catalog order is kept).
    pub only: Option<BTreeSet<String>>,
    pub start_ms: i64,
    pub end_ms: i64,
    /// Known parameter values, e.g. `directedId` from the token store.
    pub seeds: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Ok { pages: usize, records: usize },
    Skipped { reason: String },
    Failed { status: Option<u16>, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointStatus {
    pub endpoint_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, String>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub statuses: Vec<EndpointStatus>,
    #[serde(skip)]
    pub records: Vec<Record>,
    /// Set when the sweep stopped early (e.g. the refresh token was refused).
    pub fatal: Option<String>,
    pub exchanges: ExchangeCounts,
}

impl SweepReport {
    pub fn failed(&self) -> impl Iterator<Item = &EndpointStatus> {
        self.statuses.iter().filter(|s| matches!(s.outcome, Outcome::Failed { .. }))
    }

    pub fn voice_records(&self) -> (Vec<VoiceRequestRecord>, Vec<String>) {
        let mut out = Vec::new();
        let mut bad = Vec::new();
        for r in self.records.iter().filter(|r| r.artifact_id == "voice-history") {
            match VoiceRequestRecord::from_fields(&r.fields) {
                Ok(v) => out.push(v),
                Err(e) => bad.push(format!("{}: {e}", r.source_path)),
            }
        }
        (out, bad)
    }
}

/// Argument sets for `needed`: rows binding all of them together, else the
/// product of every value seen per parameter.
fn argument_sets(
    needed: &[String],
    rows: &[BTreeMap<String, String>],
) -> Result<Vec<BTreeMap<String, String>>, String> {
    if needed.is_empty() {
        return Ok(vec![BTreeMap::new()]);
    }
    let joint: BTreeSet<BTreeMap<String, String>> = rows
        .iter()
        .filter(|r| needed.iter().all(|n| r.contains_key(n)))
        .map(|r| needed.iter().map(|n| (n.clone(), r[n].clone())).collect())
        .collect();
    if !joint.is_empty() {
        return Ok(joint.into_iter().collect());
    }
    let mut sets = vec![BTreeMap::new()];
    for n in needed {
        let values: BTreeSet<&String> = rows.iter().filter_map(|r| r.get(n)).collect();
        if values.is_empty() {
            return Err(format!("no value discovered for {n}"));
        }
        sets = sets
            .into_iter()
            .flat_map(|s| {
                values.iter().map(move |v| {
                    let mut s = s.clone();
                    s.insert(n.clone(), (*v).clone());
                    s
                })
            })
            .collect();
        if sets.len() > MAX_COMBINATIONS {
            return Err(format!("more than {MAX_COMBINATIONS} argument combinations"));
        }
    }
    Ok(sets)
}

/// Query every selected endpoint in catalog order, feeding identifiers
/// discovered in earlier responses into later requests.
pub fn sweep(session: &Session, opts: &AcquireOptions) -> SweepReport {
    let mut rows: Vec<BTreeMap<String, String>> = opts
        .seeds
        .iter()
        .flat_map(|(k, vs)| vs.iter().map(move |v| BTreeMap::from([(k.clone(), v.clone())])))
        .collect();
    let mut report = SweepReport {
        statuses: Vec::new(),
        records: Vec::new(),
        fatal: None,
        exchanges: session.exchange_counts(),
    };
    let selected: Vec<&EndpointDescriptor> = session
        .config()
        .endpoints
        .iter()
        .filter(|e| opts.only.as_ref().is_none_or(|o| o.contains(&e.id)))
        .collect();
    for ep in selected {
        let status = |args: &BTreeMap<String, String>, outcome| EndpointStatus {
            endpoint_id: ep.id.clone(),
            args: args.clone(),
            outcome,
        };
        if let Some(f) = &report.fatal {
            report.statuses.push(status(&BTreeMap::new(), Outcome::Skipped {
                reason: format!("not attempted: {f}"),
            }));
            continue;
        }
        let mut window = BTreeMap::new();
        if let Some(w) = &ep.window {
            window.insert(w.start.clone(), opts.start_ms.to_string());
            window.insert(w.end.clone(), opts.end_ms.to_string());
        }
        let needed: Vec<String> = ep
            .required_params()
            .map(|p| p.name.clone())
            .filter(|n| !window.contains_key(n))
            .collect();
        let sets = match argument_sets(&needed, &rows) {
            Ok(s) => s,
            Err(reason) => {
                report.statuses.push(status(&BTreeMap::new(), Outcome::Skipped { reason }));
                continue;
            }
        };
        for args in sets {
            let mut full = args.clone();
            full.extend(window.clone());
            match fetch_records(session, ep, &full) {
                Ok((pages, recs)) => {
                    for r in &recs {
                        let row: BTreeMap<String, String> = ep
                            .yields
                            .iter()
                            .filter_map(|(param, field)| Some((param.clone(), r.fields.get(field).and_then(scalar_string)?)))
                            .collect();
                        if !row.is_empty() {
                            rows.push(row);
                        }
                    }
                    report.statuses.push(status(&args, Outcome::Ok {
                        pages,
                        records: recs.len(),
                    }));
                    report.records.extend(recs);
                }
                Err(e) => {
                    let fatal = matches!(e, CloudError::RefreshRejected { .. } | CloudError::Safety(_));
                    report.statuses.push(status(&args, Outcome::Failed {
                        status: e.status(),
                        message: e.to_string(),
                    }));
                    if fatal {
                        report.fatal = Some(e.to_string());
                        break;
                    }
                }
            }
        }
    }
    report.exchanges = session.exchange_counts();
    report
}

fn fetch_records(
    session: &Session,
    ep: &EndpointDescriptor,
    args: &BTreeMap<String, String>,
) -> Result<(usize, Vec<Record>), CloudError> {
    let pages = session.fetch_all(ep, args)?;
    let mut out = Vec::new();
    for p in &pages {
        out.extend(response_records(ep, p.seq, &p.content_type, &p.body)?);
    }
    Ok((pages.len(), out))
}

/// Re-derive records from an archived log alone. Entries that were errors,
/// withheld, or of unknown endpoints contribute nothing; unreadable blobs are
/// reported.
pub fn replay(log: &AcquisitionLog, config: &EndpointConfig) -> (Vec<Record>, Vec<String>) {
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for e in log.entries() {
        if e.withheld || e.status >= 400 {
            continue;
        }
        let Some(ep) = config.endpoint(&e.endpoint_id) else {
            continue;
        };
        let body = match log.blob(&e.body_sha256) {
            Ok(b) => b,
            Err(err) => {
                problems.push(format!("{}: {err}", e.reference()));
                continue;
            }
        };
        if sha256_hex(&body) != e.body_sha256 {
            problems.push(format!("{}: blob digest mismatch", e.reference()));
            continue;
        }
        match response_records(ep, e.seq, &e.content_type, &body) {
            Ok(r) => records.extend(r),
            Err(err) => problems.push(format!("{}: {err}", e.reference())),
        }
    }
    (records, problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn joint_rows_preferred_over_product() {
        let rows = vec![row(&[("photoId", "p1"), ("ownerId", "o1")]), row(&[("photoId", "p2"), ("ownerId", "o2")])];
        let sets = argument_sets(&["photoId".into(), "ownerId".into()], &rows).unwrap();
        assert_eq!(sets.len(), 2);
    }

    #[test]
    fn product_when_no_joint_row() {
        let rows = vec![row(&[("commsId", "c")]), row(&[("conversationId", "a")]), row(&[("conversationId", "b")])];
        let sets = argument_sets(&["commsId".into(), "conversationId".into()], &rows).unwrap();
        assert_eq!(sets.len(), 2);
        assert!(argument_sets(&["listId".into()], &rows).is_err());
    }

    #[test]
    fn voice_record_requires_utterance() {
        let mut m = Map::new();
        m.insert("timestamp".into(), Value::from(5));
        assert!(VoiceRequestRecord::from_fields(&m).is_err());
        m.insert("utteranceId".into(), Value::from("u1"));
        assert_eq!(VoiceRequestRecord::from_fields(&m).unwrap().timestamp, 5);
    }
}
