use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PathError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogCategory {
    Crash,
    Events,
    Kernel,
    Main,
    Metrics,
    System,
    Vitals,
}

impl LogCategory {
    pub const ALL: [LogCategory; 7] = [
        LogCategory::Crash,
        LogCategory::Events,
        LogCategory::Kernel,
        LogCategory::Main,
        LogCategory::Metrics,
        LogCategory::System,
        LogCategory::Vitals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LogCategory::Crash => "crash",
            LogCategory::Events => "events",
            LogCategory::Kernel => "kernel",
            LogCategory::Main => "main",
            LogCategory::Metrics => "metrics",
            LogCategory::System => "system",
            LogCategory::Vitals => "vitals",
        }
    }
}

impl fmt::Display for LogCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LogCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        LogCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown log category {s:?}"))
    }
}

/// One decompressed DropBox archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropboxLogEntry {
    pub category: LogCategory,
    /// Unix ms from the file name.
    pub timestamp: i64,
    pub lines: Vec<String>,
    pub source_path: String,
}

impl DropboxLogEntry {
    pub fn file_name(&self) -> String {
        archive_name(self.category, self.timestamp)
    }
}

pub fn archive_name(category: LogCategory, timestamp: i64) -> String {
    format!("Log.{category}@{timestamp}.txt.zip")
}

fn name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^Log\.(crash|events|kernel|main|metrics|system|vitals)@(\d{1,19})\.txt\.zip$").unwrap()
    })
}

/// Category and timestamp encoded in an archive file name.
pub fn parse_archive_name(name: &str) -> Option<(LogCategory, i64)> {
    let c = name_re().captures(name)?;
    Some((c[1].parse().ok()?, c[2].parse().ok()?))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DropboxRead {
    pub entries: Vec<DropboxLogEntry>,
    /// Files whose names do not follow the archive pattern.
    pub skipped: Vec<String>,
    pub errors: Vec<PathError>,
}

/// Decompress one archive; members are concatenated in archive order.
pub fn read_archive(path: &Path, source_path: &str) -> Result<Option<DropboxLogEntry>, PathError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let Some((category, timestamp)) = parse_archive_name(&name) else {
        return Ok(None);
    };
    let err = |message: String| PathError {
        path: source_path.to_string(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| err(format!("corrupt archive: {e}")))?;
    let mut lines = Vec::new();
    for i in 0..zip.len() {
        let mut member = zip.by_index(i).map_err(|e| err(format!("corrupt archive: {e}")))?;
        if member.is_dir() {
            continue;
        }
        let mut raw = Vec::new();
        member
            .read_to_end(&mut raw)
            .map_err(|e| err(format!("corrupt member {}: {e}", member.name())))?;
        lines.extend(String::from_utf8_lossy(&raw).lines().map(str::to_string));
    }
    Ok(Some(DropboxLogEntry {
        category,
        timestamp,
        lines,
        source_path: source_path.to_string(),
    }))
}

/// Read every `Log.{category}@{ms}.txt.zip` directly inside `dir`, in
/// file-name order.
pub fn read_dropbox_logs(dir: &Path) -> std::io::Result<DropboxRead> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.path())
        .collect();
    names.sort();
    let mut out = DropboxRead::default();
    for path in names {
        let shown = path.to_string_lossy().into_owned();
        match read_archive(&path, &shown) {
            Ok(Some(entry)) => out.entries.push(entry),
            Ok(None) => out.skipped.push(shown),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_names() {
        assert_eq!(
            parse_archive_name("Log.system@1691160000000.txt.zip"),
            Some((LogCategory::System, 1691160000000))
        );
        assert_eq!(parse_archive_name("notes.txt"), None);
        assert_eq!(parse_archive_name("Log.radio@1.txt.zip"), None);
        assert_eq!(archive_name(LogCategory::Main, 5), "Log.main@5.txt.zip");
    }
}
