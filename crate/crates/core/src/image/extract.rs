use std::fs::File;
use std::io::{self, Seek, SeekFrom, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmmcImage, ImageError, PartitionEntry};

const CHUNK: usize = 4 << 20;
static ZEROS: [u8; CHUNK] = [0; CHUNK];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReceipt {
    pub name: String,
    pub offset: u64,
    pub size: u64,
    pub bytes_written: u64,
    pub sha256: String,
}

/// Copy `entry` out of `image` into `sink`, hashing on the way.
///
/// Holes reported by the image source are fed to the hasher and the sink as
/// zeros without being read.
pub fn extract_partition<W: Write>(
    image: &EmmcImage,
    entry: &PartitionEntry,
    sink: &mut W,
) -> Result<ExtractionReceipt, ImageError> {
    if !entry.fits(image) {
        return Err(ImageError::EntryOutOfBounds {
            name: entry.name.clone(),
            offset: entry.offset,
            size: entry.size,
            total: image.total_size(),
        });
    }
    let start = entry.offset;
    let end = entry.end();
    let extents = image
        .data_extents(start, end)
        .unwrap_or_else(|| vec![(start, end)]);

    let mut hasher = Sha256::new();
    let mut written = 0u64;
    let mut buf = vec![0u8; CHUNK];
    let mut pos = start;

    let mut emit = |bytes: &[u8], hasher: &mut Sha256, written: &mut u64| -> io::Result<()> {
        hasher.update(bytes);
        sink.write_all(bytes)?;
        *written += bytes.len() as u64;
        Ok(())
    };

    for (ext_start, ext_end) in extents.into_iter().chain(std::iter::once((end, end))) {
        // zeros up to the next extent
        while pos < ext_start {
            let n = ((ext_start - pos) as usize).min(CHUNK);
            emit(&ZEROS[..n], &mut hasher, &mut written)?;
            pos += n as u64;
        }
        while pos < ext_end {
            let n = ((ext_end - pos) as usize).min(CHUNK);
            image.read_exact_at(pos, &mut buf[..n])?;
            emit(&buf[..n], &mut hasher, &mut written)?;
            pos += n as u64;
        }
    }
    sink.flush()?;

    Ok(ExtractionReceipt {
        name: entry.name.clone(),
        offset: entry.offset,
        size: entry.size,
        bytes_written: written,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// File sink that turns all-zero writes into seeks, leaving holes.
pub struct SparseFileSink {
    file: File,
    pos: u64,
}

impl SparseFileSink {
    pub fn new(file: File) -> Self {
        SparseFileSink { file, pos: 0 }
    }

    /// Fix the final length (trailing holes are not materialised by seeks).
    pub fn finish(mut self) -> io::Result<File> {
        self.file.flush()?;
        self.file.set_len(self.pos)?;
        Ok(self.file)
    }
}

impl Write for SparseFileSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.len() <= CHUNK && buf == &ZEROS[..buf.len()] {
            self.file.seek(SeekFrom::Current(buf.len() as i64))?;
        } else {
            self.file.write_all(buf)?;
        }
        self.pos += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Provenance;

    #[test]
    fn extracts_exact_range() {
        let mut bytes = vec![0u8; 4096];
        bytes[1024..1028].copy_from_slice(b"MARK");
        let img = EmmcImage::from_bytes(bytes).unwrap();
        let e = PartitionEntry::new("x", 1024, 2048, Provenance::KernelLog);
        let mut out = Vec::new();
        let r = extract_partition(&img, &e, &mut out).unwrap();
        assert_eq!(r.bytes_written, 2048);
        assert_eq!(&out[..4], b"MARK");
        assert_eq!(r.sha256, hex::encode(Sha256::digest(&out)));
    }

    #[test]
    fn out_of_bounds_entry_rejected() {
        let img = EmmcImage::from_bytes(vec![0; 100]).unwrap();
        let e = PartitionEntry::new("x", 50, 51, Provenance::KernelLog);
        assert!(matches!(
            extract_partition(&img, &e, &mut Vec::new()),
            Err(ImageError::EntryOutOfBounds { .. })
        ));
    }

    #[test]
    fn sparse_sink_keeps_content() {
        let f = tempfile::tempfile().unwrap();
        let mut s = SparseFileSink::new(f);
        s.write_all(&[0; 10000]).unwrap();
        s.write_all(b"abc").unwrap();
        s.write_all(&[0; 5000]).unwrap();
        let mut f = s.finish().unwrap();
        let mut back = Vec::new();
        f.seek(SeekFrom::Start(0)).unwrap();
        io::Read::read_to_end(&mut f, &mut back).unwrap();
        assert_eq!(back.len(), 15003);
        assert_eq!(&back[10000..10003], b"abc");
        assert!(back[..10000].iter().all(|&b| b == 0));
    }
}
