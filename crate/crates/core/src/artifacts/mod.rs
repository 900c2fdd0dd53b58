//! On-device artifacts: catalog, tree scan, and per-format parsers.

mod catalog;
mod dropbox;
mod events;
mod scan;
mod tables;
mod xml;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use catalog::{catalog, descriptor, ArtifactDescriptor, ParserKind, Source, APP_ROOTS};
pub use dropbox::{archive_name, parse_archive_name, read_archive, read_dropbox_logs, DropboxLogEntry, DropboxRead, LogCategory};
pub use events::{extract_events, lex_line, line_timestamp, utc_ms, DeviceEvent, EventKind, EventSource, Motion};
pub use scan::{rel_path, scan_tree, ArtifactMatch, Matcher, PathError, ScanResult};
pub use tables::{
    parse_recognition_db, parse_table_artifact, EnrolledProfile, RecognitionRead, RECOGNITION_CAVEAT,
    RECOGNITION_TABLE,
};
pub use xml::{parse_shared_prefs, parse_wifi_config, prefs_map, PrefEntry, WifiCredential};

use crate::ids::{build_graph, find_ids, IdObservation, IdentityGraph, UserId};
use crate::vault::{self, AccountLink, TokenRecord};

pub const REDACTED: &str = "<redacted>";

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("xml: {0}")]
    Xml(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("{artifact} is not read by the generic parser ({parser:?})")]
    WrongParser { artifact: String, parser: ParserKind },
    #[error("vault: {0}")]
    Vault(#[from] vault::VaultError),
}

/// One normalized output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub artifact_id: String,
    pub source_path: String,
    /// Position inside the source (table and row, pref key, line).
    pub locator: String,
    pub fields: Map<String, Value>,
}

impl Record {
    pub fn new(artifact_id: &str, source_path: &str, locator: String, fields: Map<String, Value>) -> Self {
        Record {
            artifact_id: artifact_id.to_string(),
            source_path: source_path.to_string(),
            locator,
            fields,
        }
    }

    /// Every string in the record, keys included, for identifier search.
    pub fn strings(&self) -> Vec<&str> {
        fn walk<'a>(v: &'a Value, out: &mut Vec<&'a str>) {
            match v {
                Value::String(s) => out.push(s),
                Value::Array(a) => a.iter().for_each(|x| walk(x, out)),
                Value::Object(o) => o.iter().for_each(|(k, x)| {
                    out.push(k);
                    walk(x, out)
                }),
                _ => {}
            }
        }
        let mut out = vec![self.locator.as_str()];
        for (k, v) in &self.fields {
            out.push(k);
            walk(v, &mut out);
        }
        out
    }
}

pub fn write_jsonl<T: Serialize>(items: &[T], mut w: impl Write) -> io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    /// Emit credentials and Wi-Fi keys in clear.
    pub reveal: bool,
}

/// Everything recovered from one partition tree.
#[derive(Debug, Default)]
pub struct Extraction {
    pub scan: ScanResult,
    pub records: Vec<Record>,
    pub events: Vec<DeviceEvent>,
    pub log_entries: Vec<DropboxLogEntry>,
    pub profiles: Vec<EnrolledProfile>,
    pub wifi: Vec<WifiCredential>,
    pub tokens: Vec<TokenRecord>,
    pub links: Vec<AccountLink>,
    pub graph: IdentityGraph,
    pub errors: Vec<PathError>,
    pub notices: Vec<String>,
}

fn redact(s: &str, reveal: bool) -> Value {
    if reveal || s.is_empty() {
        Value::String(s.to_string())
    } else {
        Value::String(REDACTED.into())
    }
}

fn fields(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Scan `root` against the catalog and run each descriptor's parser.
pub fn extract_tree(root: &Path, opts: ExtractOptions) -> Extraction {
    let scan = scan_tree(root, catalog());
    let mut x = Extraction::default();
    let mut observations: Vec<IdObservation> = Vec::new();
    let mut links_raw: Vec<(UserId, UserId, String)> = Vec::new();

    for m in &scan.matches {
        let d = descriptor(m.artifact_id).expect("scan ids come from the catalog");
        let rel = m.relative_path.as_str();
        let fail = |x: &mut Extraction, e: ArtifactError| {
            x.errors.push(PathError {
                path: rel.to_string(),
                message: e.to_string(),
            })
        };
        match d.parser {
            ParserKind::WifiConfig => match std::fs::read_to_string(&m.path)
                .map_err(ArtifactError::from)
                .and_then(|t| parse_wifi_config(&t))
            {
                Ok(creds) => {
                    for (i, c) in creds.iter().enumerate() {
                        x.records.push(Record::new(
                            d.id,
                            rel,
                            format!("network={i}"),
                            fields([
                                ("ssid", Value::String(c.ssid.clone())),
                                ("psk_or_key", redact(&c.psk_or_key, opts.reveal)),
                                ("security", Value::String(c.security.clone())),
                            ]),
                        ));
                    }
                    x.wifi.extend(creds);
                }
                Err(e) => fail(&mut x, e),
            },
            ParserKind::DropboxLogs => match read_archive(&m.path, rel) {
                Ok(Some(entry)) => x.log_entries.push(entry),
                Ok(None) => x.notices.push(format!("{rel}: not a DropBox archive name, skipped")),
                Err(e) => x.errors.push(e),
            },
            ParserKind::TokenStoreV2 => match vault::load_store_v2(&m.path) {
                Ok(store) => {
                    let tokens = vault::recover_tokens(&store);
                    let report = vault::link_accounts(&store.account_rows);
                    x.notices.extend(report.notices.iter().map(|n| format!("{rel}: {n}")));
                    let mut ids = Vec::new();
                    for row in &store.account_rows {
                        ids.extend(row.directed_id.clone());
                        ids.extend(find_ids(&row.key).into_iter().map(|i| i.as_str().to_string()));
                    }
                    observations.push(IdObservation::new(d.id, ids));
                    for l in &report.links {
                        links_raw.push((l.person_id.clone(), l.directed_id.clone(), d.id.to_string()));
                        x.records.push(Record::new(
                            d.id,
                            rel,
                            "account_link".into(),
                            fields([
                                ("person_id", Value::String(l.person_id.to_string())),
                                ("directed_id", Value::String(l.directed_id.to_string())),
                            ]),
                        ));
                    }
                    push_token_records(&mut x, d.id, rel, &tokens, opts.reveal);
                    x.tokens.extend(tokens);
                    x.links.extend(report.links);
                }
                Err(e) => fail(&mut x, e.into()),
            },
            ParserKind::TokenStoreV1 => match vault::load_store_v1(&m.path) {
                Ok(tokens) => {
                    observations.push(IdObservation::new(d.id, tokens.iter().filter_map(|t| t.directed_id.clone())));
                    push_token_records(&mut x, d.id, rel, &tokens, opts.reveal);
                    x.tokens.extend(tokens);
                }
                Err(e) => fail(&mut x, e.into()),
            },
            ParserKind::Recognition => match parse_recognition_db(&m.path) {
                Ok(read) => {
                    for r in &read.rejected {
                        x.notices.push(format!("{rel}: rejected personId {r:?}"));
                    }
                    for (i, p) in read.profiles.iter().enumerate() {
                        x.records.push(Record::new(
                            d.id,
                            rel,
                            format!("table={RECOGNITION_TABLE} row={i}"),
                            fields([
                                ("personId", Value::String(p.person_id.to_string())),
                                ("lastRecognizedTimeMillis", p.last_recognized_time_millis.map(Value::from).unwrap_or(Value::Null)),
                                ("caveat", Value::String(RECOGNITION_CAVEAT.into())),
                            ]),
                        ));
                    }
                    x.profiles.extend(read.profiles);
                }
                Err(e) => fail(&mut x, e),
            },
            ParserKind::Sqlite | ParserKind::SharedPrefs | ParserKind::FileListing | ParserKind::Auto => {
                match parse_table_artifact(d, &m.path, rel) {
                    Ok(rs) => x.records.extend(rs),
                    Err(e) => fail(&mut x, e),
                }
            }
        }
    }

    x.events = extract_events(&x.log_entries);
    for e in &x.events {
        if let Some(p) = e.motion.as_ref().and_then(|m| m.person_id.as_ref()) {
            observations.push(IdObservation::new(format!("{}:{}", e.source.file, e.source.line), [p.as_str()]));
        }
    }

    // one observation per (artifact, file) for generic records
    let mut per_file: BTreeMap<(&str, &str), BTreeSet<String>> = BTreeMap::new();
    for r in &x.records {
        if r.locator == "account_link" || r.locator.starts_with("token=") {
            continue;
        }
        let found = r.strings().into_iter().flat_map(find_ids).map(|i| i.as_str().to_string());
        per_file.entry((&r.artifact_id, &r.source_path)).or_default().extend(found);
    }
    for ((id, _), ids) in per_file {
        if !ids.is_empty() {
            observations.push(IdObservation::new(id, ids));
        }
    }
    x.graph = build_graph(&observations, &links_raw);
    x.scan = scan;
    x
}

fn push_token_records(x: &mut Extraction, id: &str, rel: &str, tokens: &[TokenRecord], reveal: bool) {
    for t in tokens {
        let mut f = fields([
            ("name", Value::String(t.name.clone())),
            ("key", Value::String(t.key.clone())),
            ("class", serde_json::to_value(t.class).unwrap()),
            ("store_version", serde_json::to_value(t.store_version).unwrap()),
            ("decrypted", Value::Bool(t.plaintext.is_some())),
            ("acquisition_credential", Value::Bool(t.acquisition_credential)),
        ]);
        if let Some(d) = &t.directed_id {
            f.insert("directed_id".into(), Value::String(d.clone()));
        }
        if let Some(p) = &t.plaintext {
            f.insert("plaintext".into(), redact(p, reveal));
        }
        if let Some(e) = &t.error {
            f.insert("error".into(), Value::String(e.clone()));
        }
        if let Some(n) = t.class.note() {
            f.insert("note".into(), Value::String(n.into()));
        }
        x.records.push(Record::new(id, rel, format!("token={}", t.key), f));
    }
}
