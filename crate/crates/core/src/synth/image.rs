use std::fs::{File, OpenOptions};
use std::io;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::rng;
use crate::image::{builtin_partition_table, PartitionEntry};

/// Size of the Echo Show 15 eMMC user area.
pub const IMAGE_SIZE: u64 = 0x3_ab40_0000;

/// A filesystem hidden in space no partition maps.
pub const HIDDEN_FS_AT: u64 = 0x80_0000;

#[derive(Debug, Clone)]
pub struct ImageFixture {
    pub path: PathBuf,
    pub table: Vec<PartitionEntry>,
    /// Starts of every primary ext4 superblock written, ascending.
    pub filesystems: Vec<u64>,
}

/// A primary ext4 superblock for a filesystem beginning at offset 0 of the
/// returned 1024 + 1024 bytes.
fn superblock(blocks: u64, log_block: u32, label: &str, group: u16) -> Vec<u8> {
    let mut b = vec![0u8; 2048];
    let sb = &mut b[1024..];
    sb[0x04..0x08].copy_from_slice(&(blocks as u32).to_le_bytes());
    sb[0x18..0x1c].copy_from_slice(&log_block.to_le_bytes());
    sb[0x38..0x3a].copy_from_slice(&0xEF53u16.to_le_bytes());
    sb[0x5a..0x5c].copy_from_slice(&group.to_le_bytes());
    if blocks >> 32 != 0 {
        sb[0x60..0x64].copy_from_slice(&0x80u32.to_le_bytes());
        sb[0x150..0x154].copy_from_slice(&((blocks >> 32) as u32).to_le_bytes());
    }
    let l = label.as_bytes();
    sb[0x78..0x78 + l.len().min(16)].copy_from_slice(&l[..l.len().min(16)]);
    b
}

/// Kernel-log lines describing `table`, mixed with ordinary boot output.
pub fn kernel_log_text(table: &[PartitionEntry]) -> String {
    let mut out = String::from(
        "[    0.000000] Booting Linux on physical CPU 0x0\n[    0.812004] mmc0: new HS400 MMC card at address 0001\n[    0.813377] mmcblk0: mmc0:0001 DA6016 14.6 GiB\n",
    );
    for (i, e) in table.iter().enumerate() {
        out.push_str(&format!(
            "[    0.{:06}] [PART] {} : {:#x} {:#x}\n",
            820_000 + i * 37,
            e.name,
            e.offset,
            e.size
        ));
    }
    out.push_str("[    1.204113] init: starting service 'adbd'...\n[    1.330000] healthd: battery l=100 v=5000 t=25.0\n");
    out
}

/// Write a sparse full-size image: a marker at every partition start, ext4
/// superblocks at the system, vendor and data starts and one filesystem in
/// unmapped space.
pub fn write_image(path: &Path, seed: u64) -> io::Result<ImageFixture> {
    let table = builtin_partition_table();
    let f: File = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
    f.set_len(IMAGE_SIZE)?;
    let mut r = rng(seed ^ 0x1a6e);
    let mut filesystems = Vec::new();
    for e in &table {
        match e.name.as_str() {
            "system" | "vendor" | "data" | "cache" => {
                let sb = superblock(e.size / 4096, 2, e.name.as_str(), 0);
                f.write_all_at(&sb, e.offset)?;
                filesystems.push(e.offset);
            }
            _ => {
                let mut marker = format!("PART:{}:", e.name).into_bytes();
                marker.extend((0..32).map(|_| r.gen::<u8>()));
                f.write_all_at(&marker, e.offset)?;
            }
        }
    }
    f.write_all_at(&superblock(0x1000, 0, "hidden", 0), HIDDEN_FS_AT)?;
    filesystems.push(HIDDEN_FS_AT);
    // a backup superblock in the same gap must not count as a filesystem
    f.write_all_at(&superblock(0x1000, 0, "", 1), HIDDEN_FS_AT + 0x40_0000)?;
    filesystems.sort_unstable();
    f.sync_all()?;
    Ok(ImageFixture {
        path: path.to_path_buf(),
        table,
        filesystems,
    })
}

#[derive(Debug, Clone)]
pub struct SmallFixture {
    pub bytes: Vec<u8>,
    /// Starts of primary superblocks placed on 512-byte boundaries.
    pub placed: Vec<u64>,
}

/// A noisy buffer of `len` bytes with primary superblocks at random
/// 512-aligned starts, plus backup superblocks and misaligned magics as
/// decoys.
pub fn small_ext4_fixture(seed: u64, len: usize) -> SmallFixture {
    let mut r = rng(seed);
    let mut bytes = vec![0u8; len];
    // sprinkle noise over a fraction of the sectors
    for sector in bytes.chunks_mut(512) {
        if r.gen_bool(0.05) {
            r.fill(sector);
        }
    }
    let slots = (len as u64 - 2048) / 512;
    let mut placed: Vec<u64> = Vec::new();
    let count = r.gen_range(3..=8);
    while placed.len() < count {
        let at = r.gen_range(0..slots) * 512;
        if placed.iter().all(|&p| p.abs_diff(at) >= 4096) {
            placed.push(at);
        }
    }
    placed.sort_unstable();
    for &at in &placed {
        let sb = superblock(r.gen_range(1..0x4000), r.gen_range(0..=2), "fx", 0);
        bytes[at as usize..at as usize + 2048].copy_from_slice(&sb);
    }
    // decoys, never overlapping a placed filesystem's superblock
    let clear = |at: u64, placed: &[u64]| placed.iter().all(|&p| p.abs_diff(at) >= 4096);
    for _ in 0..4 {
        let at = r.gen_range(0..slots) * 512;
        if clear(at, &placed) {
            let sb = superblock(0x100, 0, "", r.gen_range(1..10));
            bytes[at as usize..at as usize + 2048].copy_from_slice(&sb);
        }
        let odd = r.gen_range(0..slots) * 512 + r.gen_range(1..512);
        if clear(odd, &placed) && odd as usize + 2048 <= len {
            let sb = superblock(0x100, 0, "", 0);
            bytes[odd as usize..odd as usize + 2048].copy_from_slice(&sb);
        }
    }
    SmallFixture { bytes, placed }
}
