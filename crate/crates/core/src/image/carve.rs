use serde::{Deserialize, Serialize};

use super::{validate_table, EmmcImage, ImageError, PartitionEntry};

/// Superblock sits 1024 bytes into the filesystem.
pub const SUPERBLOCK_OFFSET: u64 = 1024;
const SUPERBLOCK_LEN: usize = 1024;
const MAGIC_AT: usize = 0x38;
const EXT4_MAGIC: u16 = 0xEF53;
const INCOMPAT_64BIT: u32 = 0x80;

/// Maximal gaps in `[0, total_size)` covered by no table entry, ascending.
pub fn unmapped_ranges(image: &EmmcImage, table: &[PartitionEntry]) -> Result<Vec<(u64, u64)>, ImageError> {
    validate_table(table)?;
    if let Some(e) = table.iter().find(|e| !e.fits(image)) {
        return Err(ImageError::EntryOutOfBounds {
            name: e.name.clone(),
            offset: e.offset,
            size: e.size,
            total: image.total_size(),
        });
    }
    let mut spans: Vec<(u64, u64)> = table
        .iter()
        .filter(|e| e.size > 0)
        .map(|e| (e.offset, e.end()))
        .collect();
    spans.sort_unstable();
    let mut gaps = Vec::new();
    let mut pos = 0u64;
    for (s, e) in spans {
        if s > pos {
            gaps.push((pos, s - pos));
        }
        pos = pos.max(e);
    }
    if pos < image.total_size() {
        gaps.push((pos, image.total_size() - pos));
    }
    Ok(gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilesystemKind {
    Ext4,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarvedRegion {
    pub start: u64,
    pub length: u64,
    pub filesystem_kind: FilesystemKind,
    pub superblock_offset: u64,
    pub block_size: Option<u64>,
    pub block_count: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub volume_label: String,
    /// Length was cut to the end of the scanned range.
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CarveOptions {
    /// Step between candidate filesystem starts, in bytes (≥ 1).
    pub alignment: u64,
}

impl Default for CarveOptions {
    fn default() -> Self {
        CarveOptions { alignment: 512 }
    }
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Interpret a superblock found for a filesystem starting at `start`.
/// Returns `None` for backup superblocks (non-zero block group).
fn describe(start: u64, sb: &[u8], range_end: u64) -> Option<CarvedRegion> {
    if le16(sb, MAGIC_AT) != EXT4_MAGIC {
        return None;
    }
    // s_block_group_nr
    if le16(sb, 0x5a) != 0 {
        return None;
    }
    let log_block = le32(sb, 0x18);
    let mut warnings = Vec::new();
    let avail = range_end - start;
    let label_raw = &sb[0x78..0x88];
    let label = String::from_utf8_lossy(label_raw.split(|&b| b == 0).next().unwrap_or_default()).into_owned();

    if log_block > 6 {
        warnings.push(format!("implausible s_log_block_size {log_block}"));
        return Some(CarvedRegion {
            start,
            length: avail,
            filesystem_kind: FilesystemKind::Unknown,
            superblock_offset: start + SUPERBLOCK_OFFSET,
            block_size: None,
            block_count: None,
            volume_label: label,
            clamped: true,
            warnings,
        });
    }
    let block_size = 1024u64 << log_block;
    let mut blocks = le32(sb, 0x04) as u64;
    if le32(sb, 0x60) & INCOMPAT_64BIT != 0 {
        blocks |= (le32(sb, 0x150) as u64) << 32;
    }
    let declared = blocks.saturating_mul(block_size);
    let (length, clamped) = if declared > avail {
        warnings.push(format!(
            "block count {blocks} x {block_size} = {declared:#x} bytes exceeds the {avail:#x} bytes available"
        ));
        (avail, true)
    } else if declared == 0 {
        warnings.push("block count is zero".to_string());
        (avail, true)
    } else {
        (declared, false)
    };
    Some(CarvedRegion {
        start,
        length,
        filesystem_kind: FilesystemKind::Ext4,
        superblock_offset: start + SUPERBLOCK_OFFSET,
        block_size: Some(block_size),
        block_count: Some(blocks),
        volume_label: label,
        clamped,
        warnings,
    })
}

/// Scan `(start, length)` for ext4 filesystems beginning at multiples of
/// `opts.alignment` from `start`.
pub fn carve_ext4(
    image: &EmmcImage,
    range: (u64, u64),
    opts: CarveOptions,
) -> Result<Vec<CarvedRegion>, ImageError> {
    let (start, length) = range;
    let end = start
        .checked_add(length)
        .filter(|&e| e <= image.total_size())
        .ok_or(ImageError::OutOfBounds {
            offset: start,
            len: length,
            total: image.total_size(),
        })?;
    let align = opts.alignment.max(1);
    let need = SUPERBLOCK_OFFSET + SUPERBLOCK_LEN as u64;
    let mut found = Vec::new();
    if length < need {
        return Ok(found);
    }
    let last_start = end - need;

    // Read in windows; each window covers candidate starts [w, w + WINDOW)
    // plus the trailing superblock bytes.
    const WINDOW: u64 = 8 << 20;
    let mut buf = Vec::new();
    let mut w = start;
    while w <= last_start {
        let cand_end = (w + WINDOW).min(last_start + 1);
        let read_end = cand_end - 1 + need;
        let extents = image.data_extents(w, read_end);
        let skip = matches!(&extents, Some(e) if e.is_empty());
        if !skip {
            buf.resize((read_end - w) as usize, 0);
            image.read_exact_at(w, &mut buf)?;
            let mut cand = w;
            while cand < cand_end {
                let at = (cand - w) as usize + SUPERBLOCK_OFFSET as usize;
                if le16(&buf, at + MAGIC_AT) == EXT4_MAGIC {
                    if let Some(region) = describe(cand, &buf[at..at + SUPERBLOCK_LEN], end) {
                        found.push(region);
                    }
                }
                cand += align;
            }
        }
        // next window starts at the next aligned candidate
        let steps = (cand_end - start).div_ceil(align);
        w = start + steps * align;
    }
    Ok(found)
}

/// Check a single filesystem start, e.g. the first byte of a partition.
pub fn probe_ext4(image: &EmmcImage, start: u64, limit: u64) -> Result<Option<CarvedRegion>, ImageError> {
    if limit < SUPERBLOCK_OFFSET + SUPERBLOCK_LEN as u64 {
        return Ok(None);
    }
    let sb = image.read_vec(start + SUPERBLOCK_OFFSET, SUPERBLOCK_LEN)?;
    Ok(describe(start, &sb, start + limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Provenance;

    fn put_sb(img: &mut [u8], fs_start: usize, blocks: u32, log_bs: u32, group: u16) {
        let sb = fs_start + 1024;
        img[sb + 0x04..sb + 0x08].copy_from_slice(&blocks.to_le_bytes());
        img[sb + 0x18..sb + 0x1c].copy_from_slice(&log_bs.to_le_bytes());
        img[sb + 0x38..sb + 0x3a].copy_from_slice(&0xEF53u16.to_le_bytes());
        img[sb + 0x5a..sb + 0x5c].copy_from_slice(&group.to_le_bytes());
    }

    #[test]
    fn zeros_have_no_filesystems() {
        let img = EmmcImage::from_bytes(vec![0; 1 << 20]).unwrap();
        assert!(carve_ext4(&img, (0, 1 << 20), CarveOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn finds_fs_at_4096() {
        let mut b = vec![0u8; 1 << 20];
        put_sb(&mut b, 4096, 64, 2, 0);
        let img = EmmcImage::from_bytes(b).unwrap();
        let hits = carve_ext4(&img, (0, 1 << 20), CarveOptions::default()).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].start, 4096);
        assert_eq!(hits[0].length, 64 * 4096);
        assert_eq!(hits[0].filesystem_kind, FilesystemKind::Ext4);
        assert!(!hits[0].clamped);
    }

    #[test]
    fn oversized_block_count_is_clamped_and_flagged() {
        let mut b = vec![0u8; 1 << 20];
        put_sb(&mut b, 8192, 1_000_000, 2, 0);
        let img = EmmcImage::from_bytes(b).unwrap();
        let hits = carve_ext4(&img, (0, 1 << 20), CarveOptions::default()).unwrap();
        assert_eq!(hits[0].length, (1 << 20) - 8192);
        assert!(hits[0].clamped);
        assert!(!hits[0].warnings.is_empty());
    }

    #[test]
    fn backup_superblocks_are_not_filesystem_starts() {
        let mut b = vec![0u8; 1 << 20];
        put_sb(&mut b, 4096, 64, 2, 1);
        let img = EmmcImage::from_bytes(b).unwrap();
        assert!(carve_ext4(&img, (0, 1 << 20), CarveOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn respects_alignment_and_window_edges() {
        let size = 20 << 20;
        let mut b = vec![0u8; size];
        // straddles the first 8 MiB window boundary
        let odd = (8 << 20) - 512;
        put_sb(&mut b, odd, 8, 0, 0);
        put_sb(&mut b, 12345, 8, 0, 0);
        let img = EmmcImage::from_bytes(b).unwrap();
        let at512: Vec<u64> = carve_ext4(&img, (0, size as u64), CarveOptions::default())
            .unwrap()
            .iter()
            .map(|r| r.start)
            .collect();
        assert_eq!(at512, vec![odd as u64]);
        let at1: Vec<u64> = carve_ext4(&img, (0, size as u64), CarveOptions { alignment: 1 })
            .unwrap()
            .iter()
            .map(|r| r.start)
            .collect();
        assert_eq!(at1, vec![12345, odd as u64]);
    }

    #[test]
    fn unmapped_edge_cases() {
        let img = EmmcImage::from_bytes(vec![0; 1000]).unwrap();
        assert_eq!(unmapped_ranges(&img, &[]).unwrap(), vec![(0, 1000)]);
        let full = [PartitionEntry::new("all", 0, 1000, Provenance::KernelLog)];
        assert!(unmapped_ranges(&img, &full).unwrap().is_empty());
        let overlap = [
            PartitionEntry::new("a", 0, 600, Provenance::KernelLog),
            PartitionEntry::new("b", 500, 100, Provenance::KernelLog),
        ];
        assert!(matches!(unmapped_ranges(&img, &overlap), Err(ImageError::Overlap { .. })));
    }
}
