//! Append-only acquisition log with a content-addressed body store.
//!
//! On disk: `acquisition.jsonl` (one [`LogEntry`] per line) and
//! `blobs/<sha256>`.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const LOG_FILE: &str = "acquisition.jsonl";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp: i64,
    pub endpoint_id: String,
    pub method: String,
    pub host: String,
    pub path_and_query: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, String>,
    pub status: u16,
    #[serde(default)]
    pub content_type: String,
    pub body_sha256: String,
    pub body_len: u64,
    /// Body not stored (credential material).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub withheld: bool,
}

impl LogEntry {
    pub fn reference(&self) -> String {
        format!("acq:{}", self.seq)
    }
}

#[derive(Debug, Default)]
pub struct AcquisitionLog {
    dir: Option<PathBuf>,
    entries: Vec<LogEntry>,
    memory: BTreeMap<String, Vec<u8>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl AcquisitionLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Append to `dir`, creating it; existing entries are kept and numbering
    /// continues after them.
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir.join(BLOB_DIR))?;
        let entries = if dir.join(LOG_FILE).exists() {
            read_entries(&dir.join(LOG_FILE))?
        } else {
            Vec::new()
        };
        Ok(AcquisitionLog {
            dir: Some(dir.to_path_buf()),
            entries,
            memory: BTreeMap::new(),
        })
    }

    /// Read-only view of a finished log directory.
    pub fn load(dir: &Path) -> io::Result<Self> {
        Ok(AcquisitionLog {
            dir: Some(dir.to_path_buf()),
            entries: read_entries(&dir.join(LOG_FILE))?,
            memory: BTreeMap::new(),
        })
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Store `body` (unless `withheld`) and append its entry. Returns the
    /// entry's sequence number.
    #[allow(clippy::too_many_arguments)]
    pub fn append(
        &mut self,
        timestamp: i64,
        endpoint_id: &str,
        req: &super::HttpRequest,
        args: &BTreeMap<String, String>,
        status: u16,
        content_type: &str,
        body: &[u8],
        withheld: bool,
    ) -> io::Result<u64> {
        let seq = self.entries.last().map_or(0, |e| e.seq + 1);
        let digest = sha256_hex(body);
        if !withheld {
            self.put_blob(&digest, body)?;
        }
        let entry = LogEntry {
            seq,
            timestamp,
            endpoint_id: endpoint_id.to_string(),
            method: req.method.clone(),
            host: req.host.clone(),
            path_and_query: req.path_and_query.clone(),
            args: args.clone(),
            status,
            content_type: content_type.to_string(),
            body_sha256: digest,
            body_len: body.len() as u64,
            withheld,
        };
        if let Some(dir) = &self.dir {
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?;
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        self.entries.push(entry);
        Ok(seq)
    }

    fn put_blob(&mut self, digest: &str, body: &[u8]) -> io::Result<()> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(BLOB_DIR).join(digest);
                if !path.exists() {
                    let tmp = dir.join(BLOB_DIR).join(format!(".{digest}.tmp"));
                    fs::write(&tmp, body)?;
                    fs::rename(&tmp, &path)?;
                }
            }
            None => {
                self.memory.entry(digest.to_string()).or_insert_with(|| body.to_vec());
            }
        }
        Ok(())
    }

    pub fn blob(&self, digest: &str) -> io::Result<Vec<u8>> {
        match &self.dir {
            Some(dir) => fs::read(dir.join(BLOB_DIR).join(digest)),
            None => self
                .memory
                .get(digest)
                .cloned()
                .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("blob {digest}"))),
        }
    }
}

fn read_entries(path: &Path) -> io::Result<Vec<LogEntry>> {
    crate::artifacts::read_jsonl(BufReader::new(fs::File::open(path)?))
}
