//! Command implementations behind the CLI verbs, their exit-code contract
//! and the unified timeline.

mod commands;
mod timeline;

pub use commands::{
    cmd_acquire, cmd_carve, cmd_decrypt, cmd_extract, cmd_mock_serve, AcquireArgs, AcquireSummary, CarveArgs,
    CarveManifest, CredentialSource, CredentialsManifest, DecryptArgs, ExtractArgs, ExtractSummary, MockServeArgs,
    PartitionReport, CARVE_FORMAT,
};
pub use timeline::{
    build_timeline, cmd_timeline, parse_tz, render_csv, TimelineArgs, TimelineEvent, TimelineSource, TIMELINE_FORMAT,
};

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::cloud::CloudError;
use crate::image::ImageError;
use crate::vault::VaultError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Usage,
    Io,
    Schema,
    Crypto,
    Auth,
    Routing,
    Transport,
    Refused,
    NothingFound,
}

impl ExitClass {
    pub const ALL: [ExitClass; 9] = [
        ExitClass::Usage,
        ExitClass::Io,
        ExitClass::Schema,
        ExitClass::Crypto,
        ExitClass::Auth,
        ExitClass::Routing,
        ExitClass::Transport,
        ExitClass::Refused,
        ExitClass::NothingFound,
    ];

    pub fn code(self) -> i32 {
        match self {
            ExitClass::Usage => 2,
            ExitClass::Io => 3,
            ExitClass::Schema => 4,
            ExitClass::Crypto => 5,
            ExitClass::Auth => 6,
            ExitClass::Routing => 7,
            ExitClass::Transport => 8,
            ExitClass::Refused => 9,
            ExitClass::NothingFound => 10,
        }
    }
}

#[derive(Debug)]
pub struct CmdError {
    pub class: ExitClass,
    pub message: String,
}

impl CmdError {
    pub fn new(class: ExitClass, message: impl Into<String>) -> Self {
        CmdError {
            class,
            message: message.into(),
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CmdError {}

impl From<io::Error> for CmdError {
    fn from(e: io::Error) -> Self {
        CmdError::new(ExitClass::Io, e.to_string())
    }
}

impl From<ImageError> for CmdError {
    fn from(e: ImageError) -> Self {
        let class = match e {
            ImageError::Io(_) => ExitClass::Io,
            _ => ExitClass::Schema,
        };
        CmdError::new(class, e.to_string())
    }
}

impl From<VaultError> for CmdError {
    fn from(e: VaultError) -> Self {
        let class = match e {
            VaultError::Schema(_) | VaultError::Sqlite(_) => ExitClass::Schema,
            VaultError::Secret(_) | VaultError::Length(_) | VaultError::Padding => ExitClass::Crypto,
        };
        CmdError::new(class, e.to_string())
    }
}

impl From<CloudError> for CmdError {
    fn from(e: CloudError) -> Self {
        let class = match &e {
            CloudError::Routing(_) => ExitClass::Routing,
            CloudError::Safety(_) => ExitClass::Refused,
            CloudError::Config(_) | CloudError::Precondition { .. } | CloudError::InvalidArgument(_) => ExitClass::Usage,
            CloudError::Io(_) => ExitClass::Io,
            e if e.is_auth() => ExitClass::Auth,
            _ => ExitClass::Transport,
        };
        CmdError::new(class, e.to_string())
    }
}

/// Write via a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = io::BufWriter::new(fs::File::create(&tmp)?);
        write(&mut f)?;
        f.flush()?;
        f.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_json_atomic(path: &Path, value: &impl serde::Serialize) -> io::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn write_jsonl_atomic<T: serde::Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    write_atomic(path, |w| crate::artifacts::write_jsonl(items, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let mut codes: Vec<i32> = ExitClass::ALL.iter().map(|c| c.code()).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), ExitClass::ALL.len());
        assert!(!codes.contains(&0) && !codes.contains(&1));
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json_atomic(&p, &serde_json::json!({"a": 1})).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, [std::ffi::OsString::from("x.json")]);
    }
}
