//! Raw eMMC images: the fixed partition layout, extraction of partitions,
//! unmapped space and ext4 carving.

mod carve;
mod extract;
mod table;

pub use carve::{carve_ext4, probe_ext4, unmapped_ranges, CarveOptions, CarvedRegion, FilesystemKind};
pub use extract::{extract_partition, ExtractionReceipt, SparseFileSink};
pub use table::{
    builtin_partition_table, out_of_bounds, parse_kernel_log_table, validate_table, KernelLogTable,
    LineError, PartitionEntry, Provenance, FASTBOOT_LISTED,
};

use std::fs::File;
use std::io;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image is empty")]
    Empty,
    #[error("read of {len} bytes at {offset:#x} exceeds image size {total:#x}")]
    OutOfBounds { offset: u64, len: u64, total: u64 },
    #[error("partition {name} ({offset:#x}+{size:#x}) exceeds image size {total:#x}")]
    EntryOutOfBounds {
        name: String,
        offset: u64,
        size: u64,
        total: u64,
    },
    #[error("short read at {offset:#x}: wanted {wanted} bytes, got {got}")]
    ShortRead { offset: u64, wanted: usize, got: usize },
    #[error("partitions {a} and {b} overlap")]
    Overlap { a: String, b: String },
    #[error("duplicate partition name {0}")]
    DuplicateName(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Random-access byte source behind an [`EmmcImage`].
pub trait ImageSource: Send + Sync {
    fn len(&self) -> u64;

    /// Positional read; may return fewer bytes than requested.
    fn read_at(&self, buf: &mut [u8], offset: u64) -> io::Result<usize>;

    /// Sub-ranges of `[start, end)` that may hold non-zero data. `None` means
    /// the source cannot tell and everything must be read.
    fn data_extents(&self, _start: u64, _end: u64) -> Option<Vec<(u64, u64)>> {
        None
    }
}

impl ImageSource for Vec<u8> {
    fn len(&self) -> u64 {
        self.as_slice().len() as u64
    }

    fn read_at(&self, buf: &mut [u8], offset: u64) -> io::Result<usize> {
        let start = (offset as usize).min(self.as_slice().len());
        let n = buf.len().min(self.as_slice().len() - start);
        buf[..n].copy_from_slice(&self[start..start + n]);
        Ok(n)
    }
}

pub struct FileSource {
    file: File,
    len: u64,
}

impl FileSource {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        Ok(FileSource { file, len })
    }
}

impl ImageSource for FileSource {
    fn len(&self) -> u64 {
        self.len
    }

    #[cfg(unix)]
    fn read_at(&self, buf: &mut [u8], offset: u64) -> io::Result<usize> {
        use std::os::unix::fs::FileExt;
        self.file.read_at(buf, offset)
    }

    #[cfg(not(unix))]
    fn read_at(&self, buf: &mut [u8], offset: u64) -> io::Result<usize> {
        use std::os::windows::fs::FileExt;
        self.file.seek_read(buf, offset)
    }

    #[cfg(target_os = "linux")]
    fn data_extents(&self, start: u64, end: u64) -> Option<Vec<(u64, u64)>> {
        sparse::data_extents(&self.file, start, end)
    }
}

#[cfg(target_os = "linux")]
mod sparse {
    use std::fs::File;
    use std::os::unix::io::AsRawFd;

    /// Walk SEEK_DATA/SEEK_HOLE. Returns `None` if the filesystem does not
    /// support it. Only the file offset is touched, positional reads are
    /// unaffected.
    pub(super) fn data_extents(file: &File, start: u64, end: u64) -> Option<Vec<(u64, u64)>> {
        let fd = file.as_raw_fd();
        let mut out = Vec::new();
        let mut pos = start;
        while pos < end {
            // SAFETY: plain syscalls on a valid descriptor owned by `file`.
            let data = unsafe { libc::lseek(fd, pos as libc::off_t, libc::SEEK_DATA) };
            if data < 0 {
                let err = std::io::Error::last_os_error();
                return match err.raw_os_error() {
                    // no data past pos
                    Some(libc::ENXIO) => Some(out),
                    _ => None,
                };
            }
            let data = data as u64;
            if data >= end {
                break;
            }
            let hole = unsafe { libc::lseek(fd, data as libc::off_t, libc::SEEK_HOLE) };
            if hole < 0 {
                return None;
            }
            let hole = (hole as u64).min(end);
            out.push((data, hole));
            pos = hole;
        }
        Some(out)
    }
}

/// A flat eMMC dump with bounds-checked random access.
#[derive(Clone)]
pub struct EmmcImage {
    source: Arc<dyn ImageSource>,
    total_size: u64,
}

impl std::fmt::Debug for EmmcImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmmcImage")
            .field("total_size", &self.total_size)
            .finish_non_exhaustive()
    }
}

impl EmmcImage {
    pub fn new(source: impl ImageSource + 'static) -> Result<Self, ImageError> {
        let total_size = source.len();
        if total_size == 0 {
            return Err(ImageError::Empty);
        }
        Ok(EmmcImage {
            source: Arc::new(source),
            total_size,
        })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::new(FileSource::open(path.as_ref())?)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, ImageError> {
        Self::new(bytes)
    }

    pub fn total_size(&self) -> u64 {
        self.total_size
    }

    fn check(&self, offset: u64, len: u64) -> Result<(), ImageError> {
        match offset.checked_add(len) {
            Some(end) if end <= self.total_size => Ok(()),
            _ => Err(ImageError::OutOfBounds {
                offset,
                len,
                total: self.total_size,
            }),
        }
    }

    /// Fill `buf` from `offset`. Reads past the end are rejected up front.
    pub fn read_exact_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), ImageError> {
        self.check(offset, buf.len() as u64)?;
        let mut done = 0;
        while done < buf.len() {
            let n = self.source.read_at(&mut buf[done..], offset + done as u64)?;
            if n == 0 {
                return Err(ImageError::ShortRead {
                    offset,
                    wanted: buf.len(),
                    got: done,
                });
            }
            done += n;
        }
        Ok(())
    }

    pub fn read_vec(&self, offset: u64, len: usize) -> Result<Vec<u8>, ImageError> {
        let mut buf = vec![0; len];
        self.read_exact_at(offset, &mut buf)?;
        Ok(buf)
    }

    /// See [`ImageSource::data_extents`]. Always `Some` for in-range queries on
    /// sources that can report holes.
    pub fn data_extents(&self, start: u64, end: u64) -> Option<Vec<(u64, u64)>> {
        self.check(start, end.saturating_sub(start)).ok()?;
        self.source.data_extents(start, end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty() {
        assert!(matches!(EmmcImage::from_bytes(vec![]), Err(ImageError::Empty)));
    }

    #[test]
    fn reads_past_end_are_rejected_not_truncated() {
        let img = EmmcImage::from_bytes(vec![7; 100]).unwrap();
        let mut buf = [0u8; 10];
        assert!(img.read_exact_at(90, &mut buf).is_ok());
        assert!(matches!(
            img.read_exact_at(91, &mut buf),
            Err(ImageError::OutOfBounds { .. })
        ));
        assert!(matches!(
            img.read_exact_at(u64::MAX, &mut buf),
            Err(ImageError::OutOfBounds { .. })
        ));
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn sparse_file_reports_extents() {
        use std::io::{Seek, SeekFrom, Write};
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.as_file().set_len(64 << 20).unwrap();
        f.seek(SeekFrom::Start(32 << 20)).unwrap();
        f.write_all(&[1; 4096]).unwrap();
        f.flush().unwrap();
        let img = EmmcImage::open(f.path()).unwrap();
        if let Some(ext) = img.data_extents(0, 64 << 20) {
            let covered: u64 = ext.iter().map(|(a, b)| b - a).sum();
            assert!(covered >= 4096 && covered < 64 << 20);
            assert!(ext.iter().any(|&(a, b)| a <= 32 << 20 && b > 32 << 20));
        }
    }
}
