use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::xml::parse_shared_prefs;
use super::{ArtifactDescriptor, ArtifactError, ParserKind, Record};
use crate::db::{self, Scalar};
use crate::ids::{UserId, UserIdKind};

pub const RECOGNITION_TABLE: &str = "FaceEnrolledProfilesRecognition";

/// Reported alongside every recognition profile.
pub const RECOGNITION_CAVEAT: &str =
    "lastRecognizedTimeMillis is reported raw; observed values track device start-up, not the last recognition";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrolledProfile {
    pub person_id: UserId,
    pub last_recognized_time_millis: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognitionRead {
    pub profiles: Vec<EnrolledProfile>,
    /// Rows whose personId fails the grammar.
    pub rejected: Vec<String>,
}

/// Enrolled Visual ID profiles, one per table row.
pub fn parse_recognition_db(path: &Path) -> Result<RecognitionRead, ArtifactError> {
    let conn = db::open_readonly(path)?;
    if !db::has_table(&conn, RECOGNITION_TABLE)? {
        return Err(ArtifactError::Schema(format!("missing table {RECOGNITION_TABLE}")));
    }
    let cols = db::columns(&conn, RECOGNITION_TABLE)?;
    let find = |name: &str| cols.iter().find(|c| c.eq_ignore_ascii_case(name)).cloned();
    let person_col = find("personId")
        .ok_or_else(|| ArtifactError::Schema(format!("{RECOGNITION_TABLE} lacks column personId")))?;
    let time_col = find("lastRecognizedTimeMillis");
    let sql = format!(
        "SELECT {}, {} FROM {}",
        db::quote_ident(&person_col),
        time_col.as_deref().map(db::quote_ident).unwrap_or_else(|| "NULL".into()),
        db::quote_ident(RECOGNITION_TABLE)
    );
    let mut stmt = conn.prepare(&sql)?;
    let mut rows = stmt.query([])?;
    let mut out = RecognitionRead::default();
    while let Some(r) = rows.next()? {
        let raw: Option<String> = r.get(0)?;
        let time: Option<i64> = r.get(1)?;
        match raw.as_deref().map(|t| UserId::new(UserIdKind::PersonId, t)) {
            Some(Ok(person_id)) => out.profiles.push(EnrolledProfile {
                person_id,
                last_recognized_time_millis: time,
            }),
            _ => out.rejected.push(raw.unwrap_or_default()),
        }
    }
    Ok(out)
}

const SQLITE_MAGIC: &[u8; 16] = b"SQLite format 3\0";

fn sniff(path: &Path) -> Result<ParserKind, ArtifactError> {
    let mut head = [0u8; 64];
    let mut f = std::fs::File::open(path)?;
    let n = f.read(&mut head)?;
    let head = &head[..n];
    if head.starts_with(SQLITE_MAGIC) {
        Ok(ParserKind::Sqlite)
    } else if head.trim_ascii_start().starts_with(b"<?xml") || head.trim_ascii_start().starts_with(b"<map") {
        Ok(ParserKind::SharedPrefs)
    } else {
        Ok(ParserKind::FileListing)
    }
}

fn sqlite_records(d: &ArtifactDescriptor, path: &Path, rel: &str) -> Result<Vec<Record>, ArtifactError> {
    let conn = db::open_readonly(path)?;
    let tables = db::table_names(&conn)?;
    if tables.is_empty() {
        return Err(ArtifactError::Schema("database has no tables".into()));
    }
    let mut out = Vec::new();
    for t in tables {
        let mut stmt = conn.prepare(&format!("SELECT * FROM {}", db::quote_ident(&t)))?;
        let names: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let mut rows = stmt.query([])?;
        let mut i = 0usize;
        while let Some(r) = rows.next()? {
            let mut fields = Map::new();
            for (c, name) in names.iter().enumerate() {
                fields.insert(name.clone(), Scalar::from_ref(r.get_ref(c)?).to_json());
            }
            out.push(Record::new(d.id, rel, format!("table={t} row={i}"), fields));
            i += 1;
        }
    }
    Ok(out)
}

fn prefs_records(d: &ArtifactDescriptor, path: &Path, rel: &str) -> Result<Vec<Record>, ArtifactError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_shared_prefs(&text)?
        .into_iter()
        .map(|p| {
            let mut fields = Map::new();
            fields.insert("key".into(), Value::String(p.key.clone()));
            fields.insert("type".into(), Value::String(p.kind));
            fields.insert("value".into(), p.value);
            Record::new(d.id, rel, format!("key={}", p.key), fields)
        })
        .collect())
}

fn listing_record(d: &ArtifactDescriptor, path: &Path, rel: &str) -> Result<Vec<Record>, ArtifactError> {
    let mut f = std::fs::File::open(path)?;
    let meta = f.metadata()?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    let mut fields = Map::new();
    fields.insert("size".into(), Value::from(meta.len()));
    fields.insert("sha256".into(), Value::String(hex::encode(h.finalize())));
    if let Some(ms) = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
    {
        fields.insert("modified_ms".into(), Value::from(ms.as_millis() as i64));
    }
    Ok(vec![Record::new(d.id, rel, "file".to_string(), fields)])
}

/// Generic reader for database, preference and opaque-file artifacts.
/// Rows and keys are emitted verbatim with their column names.
pub fn parse_table_artifact(d: &ArtifactDescriptor, path: &Path, rel: &str) -> Result<Vec<Record>, ArtifactError> {
    let kind = match d.parser {
        ParserKind::Auto => sniff(path)?,
        k => k,
    };
    match kind {
        ParserKind::Sqlite => sqlite_records(d, path, rel),
        ParserKind::SharedPrefs => prefs_records(d, path, rel),
        ParserKind::FileListing => listing_record(d, path, rel),
        other => Err(ArtifactError::WrongParser {
            artifact: d.id.to_string(),
            parser: other,
        }),
    }
}
